//! Run configuration: flat `section.key = value` text.
//!
//! ```text
//! # comments run to end of line
//! potential.family = pendulum_modulated
//! potential.epsilon = 0.3
//! grid.N = 32
//! spec.m = 0, 12, 30, 42
//! ```
//!
//! Every key has a default, unknown keys are rejected, and the hash covers
//! every key that can change a numerical result.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::solvers::{InfiniteMode, SolverOptions, TransitionSpec};
use crate::verify::VerifyOptions;

/// `(key, default, description)`.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("potential.family", "pendulum_modulated", "pendulum_modulated | pendulum | twowell_periodized | zero"),
    ("potential.epsilon", "0.3", "x1-modulation amplitude in [0, 0.9]"),
    ("potential.shift", "0", "additive constant in F"),
    ("grid.n", "1", "dimension, 1 to 3"),
    ("grid.N", "32", "grid points per unit length"),
    ("grid.half_length", "20", "heteroclinic strip is [-L, L]"),
    ("grid.pad", "10", "free tiles beyond the outermost constraint region"),
    ("spec.m", "0, 12, 30, 42", "constraint anchors, 4K integers"),
    ("spec.l", "4, 4, 4, 4", "constraint lengths, 4K integers"),
    ("spec.rho", "0.1, 0.1, 0.1, 0.1", "constraint radii, 4K values"),
    ("spec.alphabet_size", "1", "declared number of distinct radii"),
    ("solver.gtol", "auto", "projected-gradient tolerance; auto = 1e-8 N"),
    ("solver.max_iters", "500", "iterations per minimization stage"),
    ("solver.stop_after", "none", "interrupt after this many iterations of a stage"),
    ("solver.penalty_start", "100", "first penalty weight"),
    ("solver.penalty_factor", "10", "penalty growth per round"),
    ("solver.penalty_rounds", "10", "maximum penalty rounds"),
    ("solver.feasibility_tol", "1e-6", "allowed violation after the last round"),
    ("solver.glue_halfwidth", "1", "tiles kept on each side of a transition centre"),
    ("solver.inactive_factor", "1e-4", "strict inactivity threshold, times rho_bar"),
    ("solver.admissibility_gap", "1e-3", "minimum distance of rho to the forbidden samples"),
    ("solver.start_shifts", "-2, 2", "multi: restart offsets in tiles; empty disables"),
    ("solver.geometry_scales", "1, 0.75, 0.5, 0.35", "multi: block shrink factors to scan; empty disables"),
    ("infinite.mode", "bilateral", "right | left | bilateral"),
    ("infinite.K_list", "1, 2, 3", "block counts, strictly increasing"),
    ("infinite.window", "19, 23", "first and last tile of the comparison window"),
    ("verify.gap_tol", "1e-3", ""),
    ("verify.pos_tol", "1e-3", ""),
    ("verify.c_cap", "50", ""),
    ("verify.local_trials", "20", ""),
    ("verify.local_radius", "2", ""),
    ("verify.orbit_tol", "1e-3", ""),
    ("verify.decay_tol", "1e-2", ""),
    ("verify.decay_offset", "10", ""),
    ("verify.residual_tol", "1e-5", ""),
    ("verify.window_sigma", "1e-2", ""),
    ("seed", "0", "seed for every randomized step"),
    ("output.dir", "runs/default", "run directory"),
];

/// Keys that do not change results and stay out of the hash.
const UNHASHED: &[&str] = &["output.dir", "solver.stop_after"];

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub potential: Potential,
    pub dim: usize,
    pub points_per_unit: usize,
    pub spec: TransitionSpec,
    pub solver: SolverOptions,
    pub infinite_mode: InfiniteMode,
    pub k_list: Vec<usize>,
    pub window: (i64, i64),
    pub start_shifts: Vec<i64>,
    pub geometry_scales: Vec<f64>,
    pub verify: VerifyOptions,
    pub seed: u64,
    pub out_dir: PathBuf,
    entries: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::parse("", &[]).expect("defaults parse")
    }
}

fn split_line(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(vec![]);
    }
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

impl RunConfig {
    /// Parse config text, then apply `key=value` overrides in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut entries: BTreeMap<String, String> =
            SCHEMA.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect();
        let mut set = |key: &str, value: &str, origin: &str| -> Result<()> {
            match entries.get_mut(key) {
                Some(slot) => {
                    *slot = value.to_string();
                    Ok(())
                }
                None => Err(Error::Config(format!("{origin}: unknown key '{key}'"))),
            }
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_line(line)
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
            set(k, v, &format!("line {}", n + 1))?;
        }
        for o in overrides {
            let (k, v) = split_line(o).ok_or_else(|| Error::Config(format!("--set '{o}': expected key=value")))?;
            set(k, v, "--set")?;
        }
        Self::from_entries(entries)
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    fn from_entries(e: BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| e[k].as_str();
        let potential = Potential::from_id(get("potential.family"), parse_num("potential.epsilon", get("potential.epsilon"))?)?
            .with_shift(parse_num("potential.shift", get("potential.shift"))?);
        let dim: usize = parse_num("grid.n", get("grid.n"))?;
        let n: usize = parse_num("grid.N", get("grid.N"))?;
        if !(1..=3).contains(&dim) || n < 2 {
            return Err(Error::Config(format!("grid.n = {dim}, grid.N = {n} out of range")));
        }
        let spec = TransitionSpec::new(
            parse_list("spec.m", get("spec.m"))?,
            parse_list("spec.l", get("spec.l"))?,
            parse_list("spec.rho", get("spec.rho"))?,
            parse_num("spec.alphabet_size", get("spec.alphabet_size"))?,
        )?;

        let mut solver = SolverOptions::for_resolution(n);
        if get("solver.gtol") != "auto" {
            solver.minimize.gtol = parse_num("solver.gtol", get("solver.gtol"))?;
        }
        solver.minimize.max_iters = parse_num("solver.max_iters", get("solver.max_iters"))?;
        solver.minimize.stop_after = match get("solver.stop_after") {
            "none" => None,
            v => Some(parse_num("solver.stop_after", v)?),
        };
        solver.hetero_half_length = parse_num("grid.half_length", get("grid.half_length"))?;
        solver.pad = parse_num("grid.pad", get("grid.pad"))?;
        solver.penalty_start = parse_num("solver.penalty_start", get("solver.penalty_start"))?;
        solver.penalty_factor = parse_num("solver.penalty_factor", get("solver.penalty_factor"))?;
        solver.penalty_rounds = parse_num("solver.penalty_rounds", get("solver.penalty_rounds"))?;
        solver.feasibility_tol = parse_num("solver.feasibility_tol", get("solver.feasibility_tol"))?;
        solver.glue_halfwidth = parse_num("solver.glue_halfwidth", get("solver.glue_halfwidth"))?;
        solver.inactive_factor = parse_num("solver.inactive_factor", get("solver.inactive_factor"))?;
        solver.admissibility_gap = parse_num("solver.admissibility_gap", get("solver.admissibility_gap"))?;

        let window: Vec<i64> = parse_list("infinite.window", get("infinite.window"))?;
        if window.len() != 2 {
            return Err(Error::Config("key 'infinite.window': expected two tiles".into()));
        }
        let geometry_scales: Vec<f64> = parse_list("solver.geometry_scales", get("solver.geometry_scales"))?;
        if let Some(s) = geometry_scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("key 'solver.geometry_scales': scale {s} must be positive")));
        }
        let seed = parse_num("seed", get("seed"))?;
        let verify = VerifyOptions {
            gap_tol: parse_num("verify.gap_tol", get("verify.gap_tol"))?,
            pos_tol: parse_num("verify.pos_tol", get("verify.pos_tol"))?,
            c_cap: parse_num("verify.c_cap", get("verify.c_cap"))?,
            local_trials: parse_num("verify.local_trials", get("verify.local_trials"))?,
            local_radius: parse_num("verify.local_radius", get("verify.local_radius"))?,
            orbit_tol: parse_num("verify.orbit_tol", get("verify.orbit_tol"))?,
            decay_tol: parse_num("verify.decay_tol", get("verify.decay_tol"))?,
            decay_offset: parse_num("verify.decay_offset", get("verify.decay_offset"))?,
            residual_tol: parse_num("verify.residual_tol", get("verify.residual_tol"))?,
            window_sigma: parse_num("verify.window_sigma", get("verify.window_sigma"))?,
            seed,
            ..VerifyOptions::default()
        };
        Ok(Self {
            potential,
            dim,
            points_per_unit: n,
            spec,
            solver,
            infinite_mode: get("infinite.mode").parse()?,
            k_list: parse_list("infinite.K_list", get("infinite.K_list"))?,
            window: (window[0], window[1]),
            start_shifts: parse_list("solver.start_shifts", get("solver.start_shifts"))?,
            geometry_scales,
            verify,
            seed,
            out_dir: PathBuf::from(get("output.dir")),
            entries: e,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Full config text, one `key = value` per line in schema order.
    pub fn to_text(&self) -> String {
        SCHEMA
            .iter()
            .map(|(k, _, _)| format!("{k} = {}\n", self.entries[*k]))
            .collect()
    }

    /// Hex sha256 of the canonical result-relevant entries.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries.iter().filter(|(k, _)| !UNHASHED.contains(&k.as_str())) {
            h.update(format!("{k}={}\n", canonical_value(v)).as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First 12 hex digits of [`hash`](Self::hash), used in file names.
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}

/// Spelling-independent form of a value: `1e-3` and `0.001` hash alike.
fn canonical_value(v: &str) -> String {
    v.split(',')
        .map(|s| {
            let s = s.trim();
            match s.parse::<f64>() {
                Ok(x) => format!("{x:e}"),
                Err(_) => s.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}
