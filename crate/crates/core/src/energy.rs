//! Discrete Lagrangian `L(u) = |grad u|^2 / 2 + F(x, u)` and the renormalized
//! tile energies built from it.
//!
//! The gradient term is a sum over grid edges, each x1-edge belonging to
//! exactly one tile; transverse edges and the potential use trapezoidal
//! weights in x1, so tile energies partition the strip energy exactly.
//! Differentiating that quadrature gives the standard `2n+1` point
//! Laplacian, which is what [`grad_j1`] returns after division by node
//! weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::optimize::{minimize, MinimizeOptions, Objective, Projection};
use crate::potential::Potential;

/// Sum of `1/2 |D_1 u|^2` over the x1-edge between lines `k` and `k2`,
/// already multiplied by the cell volume.
fn x1_edge_energy(u: &Field, k: usize, k2: usize) -> f64 {
    let g = u.grid();
    let tl = g.transverse_len();
    let c = 0.5 * g.h().powi(g.dim() as i32 - 2);
    let mut acc = 0.0;
    for t in 0..tl {
        let d = u.diff_nodes(k2 * tl + t, k * tl + t);
        acc += d * d;
    }
    c * acc
}

/// Transverse gradient energy plus potential on grid line `k`, unweighted in x1.
fn line_energy(u: &Field, pot: &Potential, k: usize) -> f64 {
    let g = u.grid();
    let tl = g.transverse_len();
    let vol = g.cell_volume();
    let c = 0.5 * g.h().powi(g.dim() as i32 - 2);
    let mut acc_f = 0.0;
    let mut acc_g = 0.0;
    for t in 0..tl {
        let i = k * tl + t;
        acc_f += pot.f(&g.coords(i), u.offsets()[i]);
        for d in 1..g.dim() {
            let j = k * tl + g.transverse_next(t, d);
            let diff = u.diff_nodes(j, i);
            acc_g += diff * diff;
        }
    }
    vol * acc_f + c * acc_g
}

/// `int_{T_p} L(u) dx` without renormalization.
pub fn tile_integral(u: &Field, pot: &Potential, p: i64) -> Result<f64> {
    let g = *u.grid();
    let lines = g.tile_lines(p)?;
    let mut acc = 0.0;
    if g.is_periodic_x1() {
        let n = g.nx1();
        for k in 0..n {
            acc += line_energy(u, pot, k) + x1_edge_energy(u, k, (k + 1) % n);
        }
        return Ok(acc);
    }
    let (k0, k1) = (*lines.start(), *lines.end());
    for k in k0..=k1 {
        acc += g.tile_line_weight(p, k) * line_energy(u, pot, k);
    }
    for k in k0..k1 {
        acc += x1_edge_energy(u, k, k + 1);
    }
    Ok(acc)
}

/// `J_0(u)`: the Lagrangian integrated over one periodic cell.
pub fn cell_energy(u: &Field, pot: &Potential) -> Result<f64> {
    if !u.grid().is_periodic_x1() {
        return Err(Error::Shape("cell energy needs a grid periodic in x1".into()));
    }
    tile_integral(u, pot, 0)
}

/// `J_{1,p}(u) = int_{T_p} L(u) - c0`.
pub fn tile_energy(u: &Field, pot: &Potential, p: i64, c0: f64) -> Result<f64> {
    Ok(tile_integral(u, pot, p)? - c0)
}

/// `J_{1;p,q}(u)`, summed in increasing tile order.
pub fn window_energy(u: &Field, pot: &Potential, p: i64, q: i64, c0: f64) -> Result<f64> {
    if p > q {
        return Err(Error::Range(format!("window [{p}, {q}] is empty")));
    }
    let g = u.grid();
    g.check_tile(p)?;
    g.check_tile(q)?;
    let mut acc = 0.0;
    for i in p..=q {
        acc += tile_energy(u, pot, i, c0)?;
    }
    Ok(acc)
}

/// Total renormalized energy of the strip.
pub fn strip_energy(u: &Field, pot: &Potential, c0: f64) -> f64 {
    let g = u.grid();
    window_energy(u, pot, g.left(), g.right() - 1, c0).expect("strip tiles are valid")
}

/// Raw gradient of [`strip_energy`] with respect to nodal values.
pub fn raw_gradient(u: &Field, pot: &Potential, out: &mut [f64]) {
    let g = *u.grid();
    let tl = g.transverse_len();
    let nx = g.nx1();
    let vol = g.cell_volume();
    let c = g.h().powi(g.dim() as i32 - 2);
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..nx {
        let w = g.line_weight(k);
        for t in 0..tl {
            let i = k * tl + t;
            out[i] += w * vol * pot.fu(&g.coords(i), u.offsets()[i]);
            for d in 1..g.dim() {
                let j = k * tl + g.transverse_next(t, d);
                let diff = w * c * u.diff_nodes(j, i);
                out[j] += diff;
                out[i] -= diff;
            }
        }
    }
    let edges = if g.is_periodic_x1() { nx } else { nx - 1 };
    for k in 0..edges {
        let k2 = (k + 1) % nx;
        for t in 0..tl {
            let (i, j) = (k * tl + t, k2 * tl + t);
            let diff = c * u.diff_nodes(j, i);
            out[j] += diff;
            out[i] -= diff;
        }
    }
}

/// Gradient of the total strip energy divided by node quadrature weights,
/// i.e. the pointwise residual `-Δ_h u + F_u(x, u)`; zero where `fixed`.
pub fn grad_j1(u: &Field, pot: &Potential, fixed: &[bool]) -> Result<Field> {
    let g = *u.grid();
    if fixed.len() != g.len() {
        return Err(Error::Shape("mask length does not match grid".into()));
    }
    let mut out = vec![0.0; g.len()];
    raw_gradient(u, pot, &mut out);
    for (i, v) in out.iter_mut().enumerate() {
        *v = if fixed[i] { 0.0 } else { *v / g.node_weight(i) };
    }
    Field::from_values(g, &out)
}

/// Nodes on the two x1 ends of a strip (Dirichlet data).
pub fn end_mask(grid: &GridSpec) -> Vec<bool> {
    let tl = grid.transverse_len();
    let nx = grid.nx1();
    (0..grid.len())
        .map(|i| {
            let k = i / tl;
            !grid.is_periodic_x1() && (k == 0 || k + 1 == nx)
        })
        .collect()
}

/// Hessian of the strip energy: a constant-coefficient edge Laplacian plus a
/// diagonal potential part.
#[derive(Clone, Debug)]
pub struct Hessian {
    grid: GridSpec,
    coupling: f64,
    potential_diag: Vec<f64>,
}

impl Hessian {
    pub fn at(u: &Field, pot: &Potential) -> Self {
        let g = *u.grid();
        let potential_diag = (0..g.len())
            .map(|i| g.node_weight(i) * pot.fuu(&g.coords(i), u.offsets()[i]))
            .collect();
        Self {
            grid: g,
            coupling: g.h().powi(g.dim() as i32 - 2),
            potential_diag,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn potential_diag_mut(&mut self) -> &mut [f64] {
        &mut self.potential_diag
    }

    /// Number of x1 edges incident to line `k`.
    fn x1_degree(&self, k: usize) -> f64 {
        let nx = self.grid.nx1();
        if self.grid.is_periodic_x1() || (k > 0 && k + 1 < nx) {
            2.0
        } else {
            1.0
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        let g = self.grid;
        let tl = g.transverse_len();
        let tdeg = 2.0 * (g.dim() - 1) as f64;
        (0..g.len())
            .map(|i| {
                let k = i / tl;
                self.coupling * (self.x1_degree(k) + tdeg * g.line_weight(k))
                    + self.potential_diag[i]
            })
            .collect()
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let tl = g.transverse_len();
        let nx = g.nx1();
        for (o, (pd, x)) in out.iter_mut().zip(self.potential_diag.iter().zip(v)) {
            *o = pd * x;
        }
        let c = self.coupling;
        for k in 0..nx {
            let w = g.line_weight(k) * c;
            for t in 0..tl {
                let i = k * tl + t;
                for d in 1..g.dim() {
                    let j = k * tl + g.transverse_next(t, d);
                    let diff = w * (v[j] - v[i]);
                    out[j] += diff;
                    out[i] -= diff;
                }
            }
        }
        let edges = if g.is_periodic_x1() { nx } else { nx - 1 };
        for k in 0..edges {
            let k2 = (k + 1) % nx;
            for t in 0..tl {
                let (i, j) = (k * tl + t, k2 * tl + t);
                let diff = c * (v[j] - v[i]);
                out[j] += diff;
                out[i] -= diff;
            }
        }
    }

    /// Off-diagonal entry between consecutive x1 lines when `dim == 1`.
    pub fn x1_offdiag(&self) -> f64 {
        -self.coupling
    }
}

/// Minimizes strip or cell energy; shared by several solvers.
pub(crate) struct EnergyObjective<'a> {
    pub pot: &'a Potential,
    pub c0: f64,
    pub template: Field,
}

impl EnergyObjective<'_> {
    pub fn field(&self, x: &[f64]) -> Field {
        let mut f = self.template.clone();
        f.offsets_mut().copy_from_slice(x);
        f
    }
}

impl Objective for EnergyObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        strip_energy(&self.field(x), self.pot, self.c0)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        raw_gradient(&self.field(x), self.pot, out);
    }

    fn weights(&self) -> Vec<f64> {
        let g = self.template.grid();
        (0..g.len()).map(|i| g.node_weight(i)).collect()
    }

    fn hessian(&self, x: &[f64]) -> Option<crate::optimize::HessianModel> {
        Some(crate::optimize::HessianModel::new(Hessian::at(&self.field(x), self.pot)))
    }
}

/// Cell problem result: `c0` and a minimizer normalized to `u(0) ∈ [0, 1)`.
#[derive(Clone, Debug)]
pub struct CellMinimum {
    pub c0: f64,
    pub minimizer: Field,
    pub iterations: usize,
}

/// Multi-start minimization of `J_0` over periodic grid functions.
pub fn compute_c0(pot: &Potential, grid: GridSpec, opts: &MinimizeOptions, seed: u64) -> Result<CellMinimum> {
    if !grid.is_periodic_x1() {
        return Err(Error::Shape("cell problem needs a torus grid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Field> = [0.0, 0.25, 0.5, 0.75]
        .iter()
        .map(|&c| Field::constant(grid, c))
        .collect();
    for _ in 0..4 {
        let amp: f64 = rng.gen_range(0.05..0.3);
        let base: f64 = rng.gen_range(0.0..1.0);
        let phase: f64 = rng.gen_range(0.0..1.0);
        starts.push(Field::from_fn(grid, |x| {
            base + amp * (2.0 * std::f64::consts::PI * (x[0] + x[1] + x[2] + phase)).sin()
        }));
    }

    let mut best: Option<CellMinimum> = None;
    let mut last_err = None;
    for start in starts {
        let obj = EnergyObjective {
            pot,
            c0: 0.0,
            template: start.clone(),
        };
        let fixed = vec![false; grid.len()];
        let outcome = minimize(&obj, &Projection::Free { fixed: &fixed }, start.offsets().to_vec(), opts);
        let (x, iterations) = match outcome {
            Ok(r) => (r.x, r.iterations),
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let mut u = obj.field(&x);
        // pi_0(u) = u(0) in [0, 1)
        let base = u.value(0).floor() as i32;
        u = u.shifted(-base);
        u.normalize();
        let j0 = cell_energy(&u, pot)?;
        if best.as_ref().is_none_or(|b| j0 < b.c0) {
            best = Some(CellMinimum {
                c0: j0,
                minimizer: u,
                iterations,
            });
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::Numerical("no cell start converged".into())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlueSide {
    /// `u` on the left of `T_p`, `phi` on the right.
    Left,
    /// `phi` on the left of `T_p`, `u` on the right.
    Right,
}

/// Linear blend of `u` and `phi` across tile `T_p`:
/// `chi = (x1 - p) u + (p + 1 - x1) phi` for [`GlueSide::Right`].
pub fn glue(u: &Field, phi: &Field, p: i64, side: GlueSide) -> Result<Field> {
    let g = *u.grid();
    g.ensure_same(phi.grid())?;
    let lines = g.tile_lines(p)?;
    let tl = g.transverse_len();
    let (k0, k1) = (*lines.start(), *lines.end());
    let n = g.points_per_unit() as f64;
    let (left, right) = match side {
        GlueSide::Left => (u, phi),
        GlueSide::Right => (phi, u),
    };
    let mut out = left.clone();
    for k in 0..g.nx1() {
        for t in 0..tl {
            let i = k * tl + t;
            if k >= k1 {
                out.copy_node(i, right, i);
            } else if k > k0 {
                let s = (k - k0) as f64 / n;
                out.set_blend(i, left, right, i, s);
            }
        }
    }
    Ok(out)
}

/// `1/2 ||grad(u - phi)||^2` on tile `T_p` with the same discrete stencil
/// as the energy.
pub fn tile_dirichlet(u: &Field, phi: &Field, p: i64) -> Result<f64> {
    let g = *u.grid();
    g.ensure_same(phi.grid())?;
    let mut d = Field::zeros(g);
    for i in 0..g.len() {
        d.set_value(i, u.diff_at(phi, i));
    }
    tile_integral(&d, &Potential::zero(), p)
}

/// Empirical lower estimate of the constant bounding
/// `|J_{1,p}(u) - 1/2 ||grad(u - v0)||^2_{L^2(T_p)}|` over `v0 <= u <= w0`.
pub fn estimate_c1(
    pot: &Potential,
    c0: f64,
    v0_cell: &Field,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples < 100 {
        return Err(Error::Config(format!("need at least 100 samples, got {samples}")));
    }
    let cg = v0_cell.grid();
    let grid = GridSpec::strip(cg.dim(), -2, 2, cg.points_per_unit())?;
    let v0 = Field::periodic_extension(v0_cell, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for s in 0..samples {
        // constants, smooth random profiles and rough nodewise samples
        let theta: Vec<f64> = match s % 3 {
            0 => vec![rng.gen_range(0.0..=1.0); grid.len()],
            1 => {
                let (a, b, c): (f64, f64, f64) =
                    (rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.5), rng.gen_range(0.0..1.0));
                (0..grid.len())
                    .map(|i| {
                        let x = grid.coords(i);
                        (a + b * (2.0 * std::f64::consts::PI * (x[0] * c + x[1] + x[2])).sin()).clamp(0.0, 1.0)
                    })
                    .collect()
            }
            _ => (0..grid.len()).map(|_| rng.gen_range(0.0..=1.0)).collect(),
        };
        let mut u = v0.clone();
        for (i, th) in theta.iter().enumerate() {
            u.set_blend(i, &v0, &v0.shifted(1), i, *th);
        }
        let j = tile_energy(&u, pot, 0, c0)?;
        let dir = tile_dirichlet(&u, &v0, 0)?;
        best = best.max((j - dir).abs());
    }
    for c in [0.0, 0.5, 1.0] {
        let u = Field::constant(grid, c);
        let j = tile_energy(&u, pot, 0, c0)?;
        best = best.max((j - tile_dirichlet(&u, &v0, 0)?).abs());
    }
    Ok(best)
}

/// Per-tile renormalized energies of one field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub c0: f64,
    pub first_tile: i64,
    pub tiles: Vec<f64>,
    pub total: f64,
    /// `max(0, -min_{p<=q} J_{1;p,q})` over this field.
    pub k1bar_est: f64,
}

impl EnergyLedger {
    pub fn build(u: &Field, pot: &Potential, c0: f64) -> Result<Self> {
        let g = u.grid();
        let tiles = (g.left()..g.right())
            .map(|p| tile_energy(u, pot, p, c0))
            .collect::<Result<Vec<_>>>()?;
        let total = tiles.iter().sum();
        // minimum window sum by Kadane on the negated sequence
        let mut min_window = f64::INFINITY;
        let mut run = 0.0;
        for &e in &tiles {
            run = if run < 0.0 { run + e } else { e };
            min_window = min_window.min(run);
        }
        Ok(Self {
            c0,
            first_tile: g.left(),
            tiles,
            total,
            k1bar_est: (-min_window).max(0.0),
        })
    }

    pub fn tile(&self, p: i64) -> Result<f64> {
        let idx = p - self.first_tile;
        if idx < 0 || idx as usize >= self.tiles.len() {
            return Err(Error::Range(format!("tile {p} not in ledger")));
        }
        Ok(self.tiles[idx as usize])
    }

    pub fn window(&self, p: i64, q: i64) -> Result<f64> {
        if p > q {
            return Err(Error::Range(format!("window [{p}, {q}] is empty")));
        }
        let mut acc = 0.0;
        for i in p..=q {
            acc += self.tile(i)?;
        }
        Ok(acc)
    }

    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut s = format!("# config_hash={config_hash}\np,J1p\n");
        for (k, e) in self.tiles.iter().enumerate() {
            s.push_str(&format!("{},{:.16e}\n", self.first_tile + k as i64, e));
        }
        s
    }

    pub fn header_json(&self, config_hash: &str) -> serde_json::Value {
        serde_json::json!({
            "c0": self.c0,
            "total": self.total,
            "K1bar_est": self.k1bar_est,
            "config_hash": config_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tile_restrict;
    use rand::Rng;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn strip(n: usize) -> GridSpec {
        GridSpec::strip(1, -2, 2, n).unwrap()
    }

    #[test]
    fn cell_energy_examples() {
        let g = GridSpec::torus(1, 32).unwrap();
        let pm = Potential::pendulum_modulated(0.3).unwrap();
        assert_eq!(cell_energy(&Field::zeros(g), &pm).unwrap(), 0.0);
        let half = Field::constant(g, 0.5);
        assert!((cell_energy(&half, &Potential::pendulum()).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(cell_energy(&Field::zeros(strip(16)), &pm), Err(Error::Shape(_))));
    }

    #[test]
    fn cell_energy_of_small_sine_converges_at_second_order() {
        // 1-D oracle: adaptive Simpson of 1/2 u'^2 + sin^2(pi u) for u = sin(2 pi x)/10
        let exact = {
            let f = |x: f64| {
                let up = 0.2 * PI * (2.0 * PI * x).cos();
                let s = (PI * 0.1 * (2.0 * PI * x).sin()).sin();
                0.5 * up * up + s * s
            };
            let m = 20000;
            let h = 1.0 / m as f64;
            (0..m)
                .map(|i| {
                    let a = i as f64 * h;
                    (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h)) * h / 6.0
                })
                .sum::<f64>()
        };
        let p = Potential::pendulum();
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let g = GridSpec::torus(1, n).unwrap();
                let u = Field::from_fn(g, |x| 0.1 * (2.0 * PI * x[0]).sin());
                (cell_energy(&u, &p).unwrap() - exact).abs()
            })
            .collect();
        assert!(errs[2] < 1e-3);
        assert!((errs[0] / errs[1] - 4.0).abs() < 0.3, "{errs:?}");
        assert!((errs[1] / errs[2] - 4.0).abs() < 0.3, "{errs:?}");
    }

    #[test]
    fn tile_energy_of_ramp() {
        let p = Potential::pendulum();
        for n in [16, 64] {
            let g = strip(n);
            let ramp = Field::from_fn(g, |x| x[0]);
            // 1/2 * 1 + int_0^1 sin^2(pi s) ds
            let e = tile_energy(&ramp, &p, 0, 0.0).unwrap();
            assert!((e - 1.0).abs() < 1e-12, "{e}");
        }
        let g = strip(16);
        for c in [0.0, 1.0] {
            let u = Field::constant(g, c);
            for t in -2..2 {
                assert_eq!(tile_energy(&u, &Potential::default(), t, 0.0).unwrap(), 0.0);
            }
        }
        assert!(tile_energy(&Field::zeros(g), &p, 2, 0.0).is_err());
    }

    #[test]
    fn window_energy_examples() {
        let g = strip(16);
        let pot = Potential::default();
        let u = Field::from_fn(g, |x| 0.5 + 0.4 * (x[0] * 1.3).sin());
        assert_eq!(
            window_energy(&u, &pot, 0, 0, 0.0).unwrap(),
            tile_energy(&u, &pot, 0, 0.0).unwrap()
        );
        assert_eq!(window_energy(&Field::zeros(g), &pot, -2, 1, 0.0).unwrap(), 0.0);
        assert!(window_energy(&u, &pot, 1, 0, 0.0).is_err());
        assert!(window_energy(&u, &pot, -2, 2, 0.0).is_err());
    }

    fn two_d_field(seed: u64) -> Field {
        let g = GridSpec::strip(2, -2, 2, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        Field::from_values(g, &vals).unwrap()
    }

    #[test]
    fn gradient_vanishes_on_integer_constants() {
        let g = GridSpec::strip(2, -2, 2, 8).unwrap();
        let pot = Potential::default();
        for c in [-1.0, 0.0, 2.0] {
            let r = grad_j1(&Field::constant(g, c), &pot, &end_mask(&g)).unwrap();
            assert!(r.values().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn gradient_matches_directional_differences() {
        let pot = Potential::pendulum_modulated(0.3).unwrap();
        let u = two_d_field(3);
        let g = *u.grid();
        let mut grad = vec![0.0; g.len()];
        raw_gradient(&u, &pot, &mut grad);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-5;
        for _ in 0..100 {
            let dir: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let shifted = |s: f64| {
                let mut f = u.clone();
                for (o, d) in f.offsets_mut().iter_mut().zip(&dir) {
                    *o += s * d;
                }
                strip_energy(&f, &pot, 0.0)
            };
            let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            let an: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
        }
    }

    #[test]
    fn residual_is_pointwise_pde_operator() {
        // u = 0.1 sin(2 pi x1) on a 1-D strip: -u'' + F_u with exact stencil
        let g = strip(32);
        let pot = Potential::pendulum();
        let u = Field::from_fn(g, |x| 0.1 * (2.0 * PI * x[0]).sin());
        let r = grad_j1(&u, &pot, &end_mask(&g)).unwrap();
        let h = g.h();
        for k in 1..g.nx1() - 1 {
            let lap = (u.value(k + 1) - 2.0 * u.value(k) + u.value(k - 1)) / (h * h);
            let expect = -lap + pot.fu(&g.coords(k), u.value(k));
            assert!((r.value(k) - expect).abs() < 1e-9);
        }
        assert_eq!(r.value(0), 0.0);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let pot = Potential::pendulum_modulated(0.3).unwrap();
        let u = two_d_field(9);
        let g = *u.grid();
        let hess = Hessian::at(&u, &pot);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut hv = vec![0.0; g.len()];
        hess.apply(&v, &mut hv);
        let eps = 1e-6;
        let grad_at = |s: f64| {
            let mut f = u.clone();
            for (o, d) in f.offsets_mut().iter_mut().zip(&v) {
                *o += s * d;
            }
            let mut out = vec![0.0; g.len()];
            raw_gradient(&f, &pot, &mut out);
            out
        };
        let (gp, gm) = (grad_at(eps), grad_at(-eps));
        for i in 0..g.len() {
            let fd = (gp[i] - gm[i]) / (2.0 * eps);
            assert!((fd - hv[i]).abs() < 1e-6 * (1.0 + hv[i].abs()));
        }
        let diag = hess.diag();
        let mut e = vec![0.0; g.len()];
        e[40] = 1.0;
        hess.apply(&e, &mut hv);
        assert!((hv[40] - diag[40]).abs() < 1e-12);
    }

    #[test]
    fn glue_examples() {
        let g = strip(32);
        let p = Potential::pendulum();
        let u = Field::from_fn(g, |x| 0.3 + 0.1 * x[0]);
        assert_eq!(glue(&u, &u, 0, GlueSide::Right).unwrap().values(), u.values());

        let w0 = Field::constant(g, 1.0);
        let v0 = Field::zeros(g);
        let chi = glue(&w0, &v0, 0, GlueSide::Right).unwrap();
        // int_0^1 1/2 + sin^2(pi s) ds = 1
        assert!((tile_energy(&chi, &p, 0, 0.0).unwrap() - 1.0).abs() < 1e-12);
        let bound = tile_dirichlet(&w0, &v0, 0).unwrap() + estimate_c1(&p, 0.0, &Field::zeros(GridSpec::torus(1, 32).unwrap()), 120, 1).unwrap();
        assert!(tile_energy(&chi, &p, 0, 0.0).unwrap() <= bound + 1e-12);

        let view = tile_restrict(&chi, 0).unwrap();
        let vals: Vec<f64> = view.values().collect();
        assert_eq!(vals[0], 0.0);
        assert_eq!(*vals.last().unwrap(), 1.0);
        assert_eq!(chi.value(0), 0.0);
        assert_eq!(chi.value(g.nx1() - 1), 1.0);

        let left = glue(&w0, &v0, 0, GlueSide::Left).unwrap();
        assert_eq!(left.value(0), 1.0);
        assert_eq!(left.value(g.nx1() - 1), 0.0);
        assert!(glue(&w0, &Field::zeros(strip(16)), 0, GlueSide::Left).is_err());
    }

    #[test]
    fn c1_estimate_examples() {
        let cell = Field::zeros(GridSpec::torus(1, 16).unwrap());
        let c1 = estimate_c1(&Potential::pendulum(), 0.0, &cell, 100, 3).unwrap();
        // the constant 1/2 alone contributes |1 - 0| = 1
        assert!(c1 >= 1.0 - 1e-12);
        assert!(estimate_c1(&Potential::pendulum(), 0.0, &cell, 10, 3).is_err());
    }

    #[test]
    fn ledger_windows_and_export() {
        let g = strip(16);
        let pot = Potential::default();
        let u = Field::from_fn(g, |x| 0.5 + 0.5 * (x[0]).tanh());
        let l = EnergyLedger::build(&u, &pot, 0.0).unwrap();
        assert_eq!(l.tiles.len(), 4);
        assert!((l.window(-2, 1).unwrap() - l.total).abs() < 1e-12);
        assert!(l.k1bar_est == 0.0);
        let csv = l.to_csv("abc");
        assert!(csv.starts_with("# config_hash=abc\np,J1p\n-2,"));
        assert_eq!(l.header_json("abc")["config_hash"], "abc");
    }

    proptest! {
        #[test]
        fn windows_are_additive(seed in 0u64..500, p in -2i64..0, q in 0i64..1, r in 1i64..2) {
            let u = two_d_field(seed);
            let pot = Potential::default();
            let a = window_energy(&u, &pot, p, q, 0.0).unwrap();
            let b = window_energy(&u, &pot, q + 1, r, 0.0).unwrap();
            let c = window_energy(&u, &pot, p, r, 0.0).unwrap();
            prop_assert!((a + b - c).abs() <= 1e-12);
        }

        #[test]
        fn windows_bounded_below_and_by_total(
            vals in proptest::collection::vec(0.0f64..=1.0, 4 * 16 + 1),
            p in -2i64..2, len in 0i64..4,
        ) {
            let g = strip(16);
            let u = Field::from_values(g, &vals).unwrap();
            let pot = Potential::default();
            let q = (p + len).min(1);
            let w = window_energy(&u, &pot, p, q, 0.0).unwrap();
            prop_assert!(w >= -1e-10);
            let ledger = EnergyLedger::build(&u, &pot, 0.0).unwrap();
            prop_assert!(ledger.tiles.iter().all(|&e| e >= -1e-10));
            prop_assert!(w <= ledger.total + 2.0 * ledger.k1bar_est + 1e-10);
        }

        #[test]
        fn glue_stays_between_inputs(seed in 0u64..200, p in -2i64..2) {
            let g = strip(16);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (u, phi) = (Field::from_values(g, &a).unwrap(), Field::from_values(g, &b).unwrap());
            let chi = glue(&u, &phi, p, GlueSide::Right).unwrap();
            for i in g.tile_lines(p).unwrap() {
                let lo = a[i].min(b[i]) - 1e-15;
                let hi = a[i].max(b[i]) + 1e-15;
                prop_assert!(chi.value(i) >= lo && chi.value(i) <= hi);
            }
        }
    }
}
