//! Uniform tensor grids on truncated cylinders `[a,b] x T^{n-1}`, tiles and
//! grid functions.
//!
//! Node layout is x1-major: the flat index of node `(k, t)` is
//! `k * transverse_len + t`, where `k` counts x1 grid lines from the left end
//! of the strip and `t` enumerates the periodic transverse nodes with x2
//! varying fastest. Every tile `T_i = [i, i+1] x T^{n-1}` is therefore a
//! contiguous block of the value array.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of grid points per unit length.
pub const MIN_POINTS_PER_UNIT: usize = 8;
/// Smallest admissible strip length in tiles.
pub const MIN_STRIP_TILES: i64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    left: i64,
    right: i64,
    points_per_unit: usize,
    periodic_x1: bool,
}

impl GridSpec {
    /// Strip `[left, right] x T^{dim-1}` with spacing `1/points_per_unit`.
    pub fn strip(dim: usize, left: i64, right: i64, points_per_unit: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("grid dimension {dim} not in 1..=3")));
        }
        if points_per_unit < MIN_POINTS_PER_UNIT {
            return Err(Error::Config(format!(
                "points per unit {points_per_unit} below minimum {MIN_POINTS_PER_UNIT}"
            )));
        }
        if right - left < MIN_STRIP_TILES {
            return Err(Error::Config(format!(
                "strip [{left},{right}] shorter than {MIN_STRIP_TILES} tiles"
            )));
        }
        Ok(Self {
            dim,
            left,
            right,
            points_per_unit,
            periodic_x1: false,
        })
    }

    /// The unit torus `T^dim`, periodic in every direction including x1.
    pub fn torus(dim: usize, points_per_unit: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("grid dimension {dim} not in 1..=3")));
        }
        if points_per_unit < MIN_POINTS_PER_UNIT {
            return Err(Error::Config(format!(
                "points per unit {points_per_unit} below minimum {MIN_POINTS_PER_UNIT}"
            )));
        }
        Ok(Self {
            dim,
            left: 0,
            right: 1,
            points_per_unit,
            periodic_x1: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn left(&self) -> i64 {
        self.left
    }

    pub fn right(&self) -> i64 {
        self.right
    }

    pub fn points_per_unit(&self) -> usize {
        self.points_per_unit
    }

    pub fn is_periodic_x1(&self) -> bool {
        self.periodic_x1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.points_per_unit as f64
    }

    /// Number of tiles covered by the grid.
    pub fn num_tiles(&self) -> usize {
        (self.right - self.left) as usize
    }

    /// Number of x1 grid lines.
    pub fn nx1(&self) -> usize {
        if self.periodic_x1 {
            self.points_per_unit
        } else {
            self.num_tiles() * self.points_per_unit + 1
        }
    }

    /// Number of nodes on one x1 grid line (`N^{dim-1}`).
    pub fn transverse_len(&self) -> usize {
        self.points_per_unit.pow(self.dim as u32 - 1)
    }

    pub fn len(&self) -> usize {
        self.nx1() * self.transverse_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell volume `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn x1(&self, k: usize) -> f64 {
        self.left as f64 + k as f64 * self.h()
    }

    /// Coordinates of a flat node index (unused components are zero).
    pub fn coords(&self, node: usize) -> [f64; 3] {
        let tl = self.transverse_len();
        let k = node / tl;
        let t = node % tl;
        let n = self.points_per_unit;
        let h = self.h();
        let mut x = [self.x1(k), 0.0, 0.0];
        if self.dim >= 2 {
            x[1] = (t % n) as f64 * h;
        }
        if self.dim >= 3 {
            x[2] = (t / n) as f64 * h;
        }
        x
    }

    /// Transverse neighbour of `t` in direction `d` (1-based transverse
    /// direction, 1 or 2) shifted by +1 with periodic wrap.
    pub fn transverse_next(&self, t: usize, d: usize) -> usize {
        let n = self.points_per_unit;
        match d {
            1 => {
                let row = t / n;
                row * n + (t % n + 1) % n
            }
            2 => {
                let col = t % n;
                ((t / n + 1) % n) * n + col
            }
            _ => unreachable!("transverse direction {d}"),
        }
    }

    pub fn check_tile(&self, i: i64) -> Result<()> {
        if i < self.left || i >= self.right {
            return Err(Error::Range(format!(
                "tile {i} outside strip [{}, {}]",
                self.left, self.right
            )));
        }
        Ok(())
    }

    /// x1 grid-line indices of tile `i`, faces included.
    pub fn tile_lines(&self, i: i64) -> Result<RangeInclusive<usize>> {
        self.check_tile(i)?;
        if self.periodic_x1 {
            return Ok(0..=self.points_per_unit - 1);
        }
        let k0 = (i - self.left) as usize * self.points_per_unit;
        Ok(k0..=k0 + self.points_per_unit)
    }

    /// Trapezoidal weight (in units of `h`) of grid line `k` within tile `i`.
    /// Face lines carry weight 1/2 so adjacent tiles partition the strip.
    pub fn tile_line_weight(&self, i: i64, k: usize) -> f64 {
        if self.periodic_x1 {
            return 1.0;
        }
        let k0 = (i - self.left) as usize * self.points_per_unit;
        if k == k0 || k == k0 + self.points_per_unit {
            0.5
        } else {
            1.0
        }
    }

    /// Quadrature weight of x1 grid line `k` over the whole grid.
    pub fn line_weight(&self, k: usize) -> f64 {
        if !self.periodic_x1 && (k == 0 || k + 1 == self.nx1()) {
            0.5
        } else {
            1.0
        }
    }

    /// Quadrature weight of a flat node index over the whole grid.
    pub fn node_weight(&self, node: usize) -> f64 {
        self.line_weight(node / self.transverse_len()) * self.cell_volume()
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!("grid mismatch: {self:?} vs {other:?}")));
        }
        Ok(())
    }

    /// The same grid with spacing refined by `factor`.
    pub fn refined(&self, factor: usize) -> GridSpec {
        GridSpec {
            points_per_unit: self.points_per_unit * factor,
            ..*self
        }
    }

    /// The same spacing and dimension on a different strip.
    pub fn with_strip(&self, left: i64, right: i64) -> Result<GridSpec> {
        GridSpec::strip(self.dim, left, right, self.points_per_unit)
    }
}

/// A real function on the nodes of a grid.
///
/// Values are stored split as an integer part plus a floating offset,
/// `u = well + offset`. Because the potentials are 1-periodic in `u`, all
/// energies depend only on offsets and integer differences, so values close
/// to any integer well keep full relative precision (e.g. `1 - 1e-30`).
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    wells: Vec<i32>,
    offsets: Vec<f64>,
}

fn split(v: f64) -> (i32, f64) {
    let w = v.round();
    (w as i32, v - w)
}

impl Field {
    pub fn constant(grid: GridSpec, c: f64) -> Self {
        let (w, o) = split(c);
        Self {
            grid,
            wells: vec![w; grid.len()],
            offsets: vec![o; grid.len()],
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let (wells, offsets) = (0..grid.len()).map(|i| split(f(&grid.coords(i)))).unzip();
        Self {
            grid,
            wells,
            offsets,
        }
    }

    pub fn from_values(grid: GridSpec, values: &[f64]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value at node {i}")));
        }
        let (wells, offsets) = values.iter().map(|&v| split(v)).unzip();
        Ok(Self {
            grid,
            wells,
            offsets,
        })
    }

    pub fn from_parts(grid: GridSpec, wells: Vec<i32>, offsets: Vec<f64>) -> Result<Self> {
        if wells.len() != grid.len() || offsets.len() != grid.len() {
            return Err(Error::Shape("well/offset arrays do not match grid".into()));
        }
        if offsets.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite offset".into()));
        }
        Ok(Self {
            grid,
            wells,
            offsets,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.wells[i] as f64 + self.offsets[i]
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    pub fn wells(&self) -> &[i32] {
        &self.wells
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn offsets_mut(&mut self) -> &mut [f64] {
        &mut self.offsets
    }

    /// `u_i - u_j` without cancellation against the integer parts.
    #[inline]
    pub fn diff_nodes(&self, i: usize, j: usize) -> f64 {
        (self.wells[i] - self.wells[j]) as f64 + (self.offsets[i] - self.offsets[j])
    }

    /// `u_i - other_i` computed from the split representation.
    #[inline]
    pub fn diff_at(&self, other: &Field, i: usize) -> f64 {
        (self.wells[i] - other.wells[i]) as f64 + (self.offsets[i] - other.offsets[i])
    }

    /// Shift every value by an integer.
    pub fn shifted(&self, k: i32) -> Field {
        Field {
            grid: self.grid,
            wells: self.wells.iter().map(|w| w + k).collect(),
            offsets: self.offsets.clone(),
        }
    }

    /// Re-split so that every offset lies in `[-1/2, 1/2]`.
    pub fn normalize(&mut self) {
        for (w, o) in self.wells.iter_mut().zip(self.offsets.iter_mut()) {
            let r = o.round();
            if r != 0.0 {
                *w += r as i32;
                *o -= r;
            }
        }
    }

    pub fn set_value(&mut self, i: usize, v: f64) {
        let (w, o) = split(v);
        self.wells[i] = w;
        self.offsets[i] = o;
    }

    /// Set node `i` to `well + offset`, re-split so the offset is in `[-1/2, 1/2]`.
    pub fn set_parts(&mut self, i: usize, well: i32, offset: f64) {
        let r = offset.round();
        self.wells[i] = well + r as i32;
        self.offsets[i] = offset - r;
    }

    /// Copy node `j` of `src` into node `i` of `self`.
    pub fn copy_node(&mut self, i: usize, src: &Field, j: usize) {
        self.wells[i] = src.wells[j];
        self.offsets[i] = src.offsets[j];
    }

    /// Convex combination `(1-s) a_j + s b_j` into node `i`, kept split.
    pub fn set_blend(&mut self, i: usize, a: &Field, b: &Field, j: usize, s: f64) {
        let base = a.wells[j];
        let rest = a.offsets[j] + s * ((b.wells[j] - base) as f64 + (b.offsets[j] - a.offsets[j]));
        let r = rest.round();
        self.wells[i] = base + r as i32;
        self.offsets[i] = rest - r;
    }

    /// Periodic extension of a torus field (same spacing) onto `grid`.
    pub fn periodic_extension(cell: &Field, grid: GridSpec) -> Result<Field> {
        let cg = cell.grid;
        if !cg.periodic_x1 || cg.dim != grid.dim || cg.points_per_unit != grid.points_per_unit {
            return Err(Error::Shape(format!(
                "cannot extend {cg:?} periodically onto {grid:?}"
            )));
        }
        let n = grid.points_per_unit;
        let tl = grid.transverse_len();
        let mut out = Field::zeros(grid);
        for k in 0..grid.nx1() {
            // strip ends are integers, so line k sits at cell line k mod N
            let kc = k % n;
            for t in 0..tl {
                out.copy_node(k * tl + t, cell, kc * tl + t);
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok((0..self.len())
            .map(|i| self.diff_at(other, i).abs())
            .fold(0.0, f64::max))
    }
}

/// Read-only view of one tile of a field.
#[derive(Clone, Debug)]
pub struct TileView<'a> {
    field: &'a Field,
    tile: i64,
    lines: RangeInclusive<usize>,
}

impl<'a> TileView<'a> {
    pub fn tile(&self) -> i64 {
        self.tile
    }

    /// Flat node indices covered by the tile.
    pub fn nodes(&self) -> std::ops::Range<usize> {
        let tl = self.field.grid.transverse_len();
        self.lines.start() * tl..(self.lines.end() + 1) * tl
    }

    pub fn len(&self) -> usize {
        self.nodes().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes().is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes().map(|i| self.field.value(i))
    }

    /// x1 range `[i, i+1]` of the tile.
    pub fn x1_range(&self) -> (f64, f64) {
        (self.tile as f64, self.tile as f64 + 1.0)
    }
}

/// View of `u` restricted to tile `T_i`.
pub fn tile_restrict(u: &Field, i: i64) -> Result<TileView<'_>> {
    let lines = u.grid.tile_lines(i)?;
    Ok(TileView {
        field: u,
        tile: i,
        lines,
    })
}

/// A translated field together with the x1 interval on which it is exact.
#[derive(Clone, Debug)]
pub struct Translated {
    pub field: Field,
    /// Tiles `[lo, hi]` where the translate is defined without padding.
    pub overlap: (i64, i64),
}

/// `tau_j u(x) = u(x - j e_1)` on the same grid. Outside the overlap
/// `[a+j, b+j] ∩ [a, b]` the result repeats the nearest boundary grid line.
pub fn translate(u: &Field, j: i64) -> Result<Translated> {
    let g = u.grid;
    let len = g.right - g.left;
    if j.abs() >= len {
        return Err(Error::Range(format!(
            "shift {j} not shorter than strip length {len}"
        )));
    }
    let tl = g.transverse_len();
    let nx = g.nx1() as i64;
    let shift = j * g.points_per_unit as i64;
    let mut out = u.clone();
    for k in 0..nx {
        let src = if g.periodic_x1 {
            (k - shift).rem_euclid(nx)
        } else {
            (k - shift).clamp(0, nx - 1)
        };
        for t in 0..tl {
            out.copy_node(k as usize * tl + t, u, src as usize * tl + t);
        }
    }
    let overlap = if g.periodic_x1 {
        (g.left, g.right)
    } else {
        ((g.left + j).max(g.left), (g.right + j).min(g.right))
    };
    Ok(Translated {
        field: out,
        overlap,
    })
}

/// `||u - phi||_{L^2(T_i)}`, trapezoidal in x1 and rectangle rule transverse.
pub fn tile_l2_distance(u: &Field, phi: &Field, i: i64) -> Result<f64> {
    u.grid.ensure_same(&phi.grid)?;
    Ok(tile_l2_sq(u, phi, i)?.sqrt())
}

pub(crate) fn tile_l2_sq(u: &Field, phi: &Field, i: i64) -> Result<f64> {
    let g = u.grid;
    let tl = g.transverse_len();
    let vol = g.cell_volume();
    let mut acc = 0.0;
    for k in g.tile_lines(i)? {
        let w = g.tile_line_weight(i, k) * vol;
        let mut line = 0.0;
        for t in 0..tl {
            let d = u.diff_at(phi, k * tl + t);
            line += d * d;
        }
        acc += w * line;
    }
    Ok(acc)
}

/// Multilinear interpolation onto a grid `factor` times finer.
pub fn refine(u: &Field, factor: usize) -> Result<Field> {
    if factor < 2 {
        return Err(Error::Config(format!("refinement factor {factor} < 2")));
    }
    let g = u.grid;
    let fine = g.refined(factor);
    let n = g.points_per_unit;
    let nf = fine.points_per_unit;
    let nx = g.nx1();
    let dim = g.dim;
    let mut out = Field::zeros(fine);

    // (coarse index, weight) pairs along one axis.
    let axis = |kf: usize, periodic: bool, count: usize| -> [(usize, f64); 2] {
        let k0 = kf / factor;
        let s = (kf % factor) as f64 / factor as f64;
        let k1 = if periodic { (k0 + 1) % count } else { (k0 + 1).min(count - 1) };
        [(k0, 1.0 - s), (k1, s)]
    };

    let tlf = fine.transverse_len();
    let tl = g.transverse_len();
    for kf in 0..fine.nx1() {
        let ax1 = axis(kf, g.periodic_x1, nx);
        for tf in 0..tlf {
            let (i2, i3) = (tf % nf, tf / nf);
            let ax2 = if dim >= 2 { axis(i2, true, n) } else { [(0, 1.0), (0, 0.0)] };
            let ax3 = if dim >= 3 { axis(i3, true, n) } else { [(0, 1.0), (0, 0.0)] };
            let mut corners = [(0usize, 0.0f64); 8];
            let mut nc = 0;
            for &(k, w1) in &ax1 {
                for &(j2, w2) in &ax2 {
                    for &(j3, w3) in &ax3 {
                        let w = w1 * w2 * w3;
                        if w != 0.0 {
                            corners[nc] = (k * tl + j3 * n + j2, w);
                            nc += 1;
                        }
                    }
                }
            }
            let base = u.wells[corners[0].0];
            let rest: f64 = corners[..nc]
                .iter()
                .map(|&(c, w)| w * ((u.wells[c] - base) as f64 + u.offsets[c]))
                .sum();
            let r = rest.round();
            let idx = kf * tlf + tf;
            out.wells[idx] = base + r as i32;
            out.offsets[idx] = rest - r;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strip1(a: i64, b: i64, n: usize) -> GridSpec {
        GridSpec::strip(1, a, b, n).unwrap()
    }

    #[test]
    fn grid_invariants_enforced() {
        assert!(GridSpec::strip(1, 0, 3, 16).is_err());
        assert!(GridSpec::strip(1, 0, 4, 4).is_err());
        assert!(GridSpec::strip(4, 0, 4, 8).is_err());
        let g = GridSpec::strip(2, -2, 2, 8).unwrap();
        assert_eq!(g.nx1(), 33);
        assert_eq!(g.transverse_len(), 8);
        assert_eq!(g.len(), 33 * 8);
    }

    #[test]
    fn tile_restrict_covers_unit_interval() {
        let g = strip1(-2, 2, 16);
        let u = Field::from_fn(g, |x| x[0]);
        let v = tile_restrict(&u, 0).unwrap();
        let vals: Vec<f64> = v.values().collect();
        assert_eq!(vals.len(), 17);
        assert_eq!(vals[0], 0.0);
        assert_eq!(*vals.last().unwrap(), 1.0);
        assert_eq!(v.x1_range(), (0.0, 1.0));
        assert!(matches!(tile_restrict(&u, 2), Err(Error::Range(_))));
        assert!(matches!(tile_restrict(&u, -3), Err(Error::Range(_))));
        let c = Field::constant(g, 0.25);
        assert!(tile_restrict(&c, 1).unwrap().values().all(|x| x == 0.25));
    }

    #[test]
    fn translate_identity_and_periodic_background() {
        let g = strip1(-4, 4, 8);
        let u = Field::from_fn(g, |x| (x[0] * 0.3).sin());
        assert_eq!(translate(&u, 0).unwrap().field, u);
        let v0 = Field::zeros(g);
        assert_eq!(translate(&v0, 1).unwrap().field, v0);
        assert!(translate(&u, 8).is_err());
        assert!(translate(&u, -8).is_err());
    }

    #[test]
    fn translate_moves_step_one_tile() {
        let g = strip1(-4, 4, 8);
        let step = Field::from_fn(g, |x| if x[0] >= 0.5 { 1.0 } else { 0.0 });
        let t = translate(&step, 1).unwrap();
        assert_eq!(t.overlap, (-3, 4));
        // index arithmetic oracle: node k of the result equals node k-N of the input
        for k in 8..g.nx1() {
            assert_eq!(t.field.value(k), step.value(k - 8));
            let x = g.x1(k);
            assert_eq!(t.field.value(k), if x >= 1.5 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn tile_distance_examples() {
        let g = strip1(-2, 2, 32);
        let one = Field::constant(g, 1.0);
        let zero = Field::zeros(g);
        assert_eq!(tile_l2_distance(&one, &one, 0).unwrap(), 0.0);
        assert!((tile_l2_distance(&one, &zero, 0).unwrap() - 1.0).abs() < 1e-14);

        // closed form 1/sqrt(3); trapezoid error is h^2/6 in the squared norm
        let exact = (1.0f64 / 3.0).sqrt();
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = strip1(-2, 2, n);
            let ramp = Field::from_fn(g, |x| x[0]);
            let d = tile_l2_distance(&ramp, &Field::zeros(g), 0).unwrap();
            errs.push((d - exact).abs());
        }
        assert!(errs[2] < 1e-4);
        assert!((errs[0] / errs[1] - 4.0).abs() < 0.1);
        assert!((errs[1] / errs[2] - 4.0).abs() < 0.1);

        let other = GridSpec::strip(1, -2, 2, 16).unwrap();
        assert!(matches!(
            tile_l2_distance(&one, &Field::zeros(other), 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn refine_examples() {
        let g = GridSpec::strip(2, -2, 2, 8).unwrap();
        let c = Field::constant(g, 0.75);
        let r = refine(&c, 3).unwrap();
        assert_eq!(r.grid().points_per_unit(), 24);
        assert!(r.values().iter().all(|&v| (v - 0.75).abs() < 1e-15));

        let g1 = strip1(-2, 2, 8);
        let lin = Field::from_fn(g1, |x| 0.3 * x[0] - 0.1);
        let r = refine(&lin, 2).unwrap();
        for i in 0..r.len() {
            let x = r.grid().x1(i);
            assert!((r.value(i) - (0.3 * x - 0.1)).abs() < 1e-14);
        }

        let s = Field::from_fn(g1, |x| (2.0 * std::f64::consts::PI * x[0]).sin());
        let r = refine(&s, 2).unwrap();
        let h = g1.h();
        let bound = (2.0 * std::f64::consts::PI).powi(2) / 8.0 * h * h;
        let err = (0..r.len())
            .map(|i| (r.value(i) - (2.0 * std::f64::consts::PI * r.grid().x1(i)).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err <= bound * 1.0001, "{err} > {bound}");
        assert!(err > 0.25 * bound);
        assert!(refine(&s, 1).is_err());
    }

    #[test]
    fn split_representation_keeps_precision_near_wells() {
        let g = strip1(0, 4, 8);
        let mut u = Field::constant(g, 1.0);
        u.offsets_mut()[3] = -1e-30;
        assert_eq!(u.diff_at(&Field::constant(g, 1.0), 3), -1e-30);
        assert!(u.diff_nodes(3, 4) < 0.0);
        let mut w = Field::from_parts(g, vec![0; g.len()], vec![0.9; g.len()]).unwrap();
        w.normalize();
        assert_eq!(w.wells()[0], 1);
        assert!((w.value(0) - 0.9).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn translate_round_trip(j in -3i64..=3, seed in 0u64..1000) {
            let g = strip1(-4, 4, 8);
            let u = Field::from_fn(g, |x| ((x[0] + seed as f64) * 1.7).sin());
            let back = translate(&translate(&u, j).unwrap().field, -j).unwrap().field;
            let lo = (g.left() + j.abs()) as f64;
            let hi = (g.right() - j.abs()) as f64;
            for k in 0..g.nx1() {
                let x = g.x1(k);
                if x >= lo && x <= hi {
                    prop_assert_eq!(back.value(k), u.value(k));
                }
            }
        }

        #[test]
        fn tile_distance_is_a_metric(
            a in proptest::collection::vec(-1.0f64..2.0, 33 * 8),
            b in proptest::collection::vec(-1.0f64..2.0, 33 * 8),
            c in proptest::collection::vec(-1.0f64..2.0, 33 * 8),
            tile in -2i64..2,
        ) {
            let g = GridSpec::strip(2, -2, 2, 8).unwrap();
            let (u, v, w) = (
                Field::from_values(g, &a).unwrap(),
                Field::from_values(g, &b).unwrap(),
                Field::from_values(g, &c).unwrap(),
            );
            let uv = tile_l2_distance(&u, &v, tile).unwrap();
            let vu = tile_l2_distance(&v, &u, tile).unwrap();
            let vw = tile_l2_distance(&v, &w, tile).unwrap();
            let uw = tile_l2_distance(&u, &w, tile).unwrap();
            prop_assert!((uv - vu).abs() <= 1e-12);
            prop_assert!(uw <= uv + vw + 1e-12);
        }

        #[test]
        fn ordered_fields_split_the_gap(
            vals in proptest::collection::vec(0.0f64..=1.0, 8 * 16 + 1),
            i in 0i64..7,
        ) {
            let g = strip1(0, 8, 16);
            let u = Field::from_values(g, &vals).unwrap();
            let v0 = Field::zeros(g);
            let w0 = Field::constant(g, 1.0);
            let bar = tile_l2_distance(&w0, &v0, 0).unwrap();
            let minus = tile_l2_distance(&u, &v0, i).unwrap();
            let plus = tile_l2_distance(&u, &w0, i).unwrap();
            prop_assert!(minus >= 0.0);
            prop_assert!(minus + plus >= bar - 1e-12);
        }
    }
}
