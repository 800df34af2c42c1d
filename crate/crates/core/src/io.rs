//! Artifact formats: field dumps, deterministic JSON, checkpoints.
//!
//! A field dump `name.bin` holds the node values as little-endian f64 in
//! x1-major order; `name.json` next to it records the grid and the config
//! hash. 1-D fields can also be written as `x,u` CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::optimize::OptimizerState;
use crate::solvers::ResumePoint;

/// Serializes floats with 17 significant digits so equal runs give equal bytes.
struct Fmt17<'a> {
    inner: serde_json::ser::PrettyFormatter<'a>,
}

impl serde_json::ser::Formatter for Fmt17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        if v == v.trunc() && v.abs() < 1e15 {
            write!(w, "{v:.1}")
        } else {
            write!(w, "{v:.16e}")
        }
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Pretty JSON with 17-significant-digit floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = Fmt17 {
        inner: serde_json::ser::PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// Sidecar describing a `.bin` dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub n: usize,
    pub a: i64,
    pub b: i64,
    #[serde(rename = "N")]
    pub points_per_unit: usize,
    pub periodic: bool,
    pub shape: Vec<usize>,
    pub ordering: String,
    pub config_hash: String,
}

impl FieldHeader {
    pub fn grid(&self) -> Result<GridSpec> {
        if self.periodic {
            GridSpec::torus(self.n, self.points_per_unit)
        } else {
            GridSpec::strip(self.n, self.a, self.b, self.points_per_unit)
        }
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Write `stem.bin` and `stem.json`.
pub fn write_field(stem: &Path, u: &Field, config_hash: &str) -> Result<()> {
    let g = u.grid();
    let mut shape = vec![g.nx1()];
    shape.extend(std::iter::repeat_n(g.points_per_unit(), g.dim() - 1));
    let header = FieldHeader {
        n: g.dim(),
        a: if g.is_periodic_x1() { 0 } else { g.left() },
        b: if g.is_periodic_x1() { 1 } else { g.right() },
        points_per_unit: g.points_per_unit(),
        periodic: g.is_periodic_x1(),
        shape,
        ordering: "x1-major".into(),
        config_hash: config_hash.into(),
    };
    let bytes: Vec<u8> = u.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(with_ext(stem, "bin"), bytes)?;
    write_json(&with_ext(stem, "json"), &header)
}

/// Read a dump written by [`write_field`].
pub fn read_field(stem: &Path) -> Result<(Field, FieldHeader)> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(with_ext(stem, "json"))?)?;
    let grid = header.grid()?;
    let bytes = fs::read(with_ext(stem, "bin"))?;
    if bytes.len() != 8 * grid.len() {
        return Err(Error::Shape(format!(
            "{}: {} bytes for {} nodes",
            stem.display(),
            bytes.len(),
            grid.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((Field::from_values(grid, &values)?, header))
}

/// `x,u` rows of a 1-D field, first line naming the config hash.
pub fn field_csv(u: &Field, config_hash: &str) -> Result<String> {
    let g = u.grid();
    if g.dim() != 1 {
        return Err(Error::Shape("CSV dumps are for n = 1".into()));
    }
    let mut s = format!("# config_hash={config_hash}\nx,u\n");
    for (k, v) in u.values().iter().enumerate() {
        s.push_str(&format!("{:.16e},{v:.16e}\n", g.x1(k)));
    }
    Ok(s)
}

/// Saved state of an interrupted command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub command: String,
    pub stage: String,
    pub iterations: usize,
    pub state: OptimizerState,
    pub iterate: Vec<f64>,
}

impl Checkpoint {
    pub fn resume_point(&self) -> ResumePoint {
        ResumePoint {
            stage: self.stage.clone(),
            state: self.state.clone(),
            iterate: self.iterate.clone(),
        }
    }

    /// Plain serde JSON, which round-trips every f64 exactly.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("corrupt checkpoint {}: {e}", path.display())))
    }
}
