//! Bound-constrained descent shared by all solvers.
//!
//! Directions come from a (shifted) Newton system when the objective exposes
//! its Hessian, otherwise from L-BFGS. Every step is projected onto the
//! feasible box and accepted by backtracking on the sufficient-decrease rule
//! along the projection arc. Convergence is measured on the projected
//! gradient divided by the quadrature weights, so `gtol` is a bound on the
//! pointwise PDE residual.

use serde::{Deserialize, Serialize};

use crate::energy::Hessian;
use crate::error::{Error, Result};

/// Armijo constant.
const SUFFICIENT_DECREASE: f64 = 1e-4;
/// Relative size below which energy differences are rounding noise.
const ROUNDING_FLOOR: f64 = 4e-15;
const MAX_BACKTRACKS: usize = 60;
const LBFGS_MEMORY: usize = 8;
/// First Levenberg shift tried when the Newton matrix is not positive definite.
const MIN_SHIFT: f64 = 1e-2;

/// A rank-one term `coef * a a^T` with sparse `a`.
#[derive(Clone, Debug)]
pub struct RankOne {
    pub coef: f64,
    pub entries: Vec<(usize, f64)>,
}

/// Hessian of an energy plus penalty terms.
#[derive(Clone, Debug)]
pub struct HessianModel {
    pub base: Hessian,
    pub rank_one: Vec<RankOne>,
}

impl HessianModel {
    pub fn new(base: Hessian) -> Self {
        Self {
            base,
            rank_one: Vec::new(),
        }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.base.apply(v, out);
        for r in &self.rank_one {
            let dot: f64 = r.entries.iter().map(|&(i, a)| a * v[i]).sum();
            for &(i, a) in &r.entries {
                out[i] += r.coef * dot * a;
            }
        }
    }
}

pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Positive weights dividing the gradient in the stopping test.
    fn weights(&self) -> Vec<f64>;
    fn hessian(&self, _x: &[f64]) -> Option<HessianModel> {
        None
    }
}

/// Feasible set of the iteration variables.
#[derive(Clone, Copy, Debug)]
pub enum Projection<'a> {
    /// Unconstrained except for nodes held fixed.
    Free { fixed: &'a [bool] },
    /// `lower <= x <= upper` componentwise, `fixed` nodes held.
    Box {
        fixed: &'a [bool],
        lower: &'a [f64],
        upper: &'a [f64],
    },
}

impl Projection<'_> {
    fn fixed(&self) -> &[bool] {
        match self {
            Projection::Free { fixed } | Projection::Box { fixed, .. } => fixed,
        }
    }

    fn project(&self, x: &mut [f64]) {
        if let Projection::Box { lower, upper, .. } = self {
            for ((v, lo), hi) in x.iter_mut().zip(lower.iter()).zip(upper.iter()) {
                *v = v.clamp(*lo, *hi);
            }
        }
    }

    /// Nodes free to move given the gradient sign at bounds.
    fn free_set(&self, x: &[f64], g: &[f64]) -> Vec<bool> {
        let fixed = self.fixed();
        (0..x.len())
            .map(|i| {
                if fixed[i] {
                    return false;
                }
                match self {
                    Projection::Free { .. } => true,
                    Projection::Box { lower, upper, .. } => {
                        !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0))
                    }
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Bound on the weighted projected gradient (pointwise residual).
    pub gtol: f64,
    pub max_iters: usize,
    /// Stop with [`Error::Interrupted`] after this many total iterations.
    #[serde(default)]
    pub stop_after: Option<usize>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-8 * 32.0,
            max_iters: 500,
            stop_after: None,
        }
    }
}

impl MinimizeOptions {
    /// Defaults for a grid with `points_per_unit` nodes per unit length.
    pub fn for_resolution(points_per_unit: usize) -> Self {
        Self {
            gtol: 1e-8 * points_per_unit as f64,
            ..Self::default()
        }
    }
}

/// Resumable optimizer state.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct OptimizerState {
    pub iteration: usize,
    pub shift: f64,
    pub trace: Vec<f64>,
    pub memory: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Final weighted projected-gradient max norm.
    pub residual: f64,
    pub trace: Vec<f64>,
    pub state: OptimizerState,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `(T + sum c a a^T) d = rhs` on the free set of a 1-D strip with the
/// Thomas algorithm and Woodbury for the rank-one terms. `None` if the
/// tridiagonal part is not positive definite.
fn solve_tridiagonal(
    model: &HessianModel,
    diag: &[f64],
    free: &[bool],
    rhs: &[f64],
) -> Option<Vec<f64>> {
    let n = diag.len();
    let off = model.base.x1_offdiag();
    let sub = |k: usize| if free[k] && free[k - 1] { off } else { 0.0 };
    // LDL^T factorization of the tridiagonal matrix
    let mut d = vec![0.0; n];
    let mut l = vec![0.0; n];
    for k in 0..n {
        let a = if free[k] { diag[k] } else { 1.0 };
        d[k] = if k == 0 {
            a
        } else {
            let s = sub(k);
            l[k] = s / d[k - 1];
            a - l[k] * s
        };
        if !(d[k] > 0.0) || !d[k].is_finite() {
            return None;
        }
    }
    let solve = |b: &[f64]| -> Vec<f64> {
        let mut z: Vec<f64> = b.iter().zip(free).map(|(v, f)| if *f { *v } else { 0.0 }).collect();
        for k in 1..n {
            z[k] -= l[k] * z[k - 1];
        }
        for k in 0..n {
            z[k] /= d[k];
        }
        for k in (0..n - 1).rev() {
            z[k] -= l[k + 1] * z[k + 1];
        }
        z
    };
    let z = solve(rhs);
    let terms: Vec<&RankOne> = model.rank_one.iter().filter(|r| r.coef > 0.0).collect();
    if terms.is_empty() {
        return Some(z);
    }
    let m = terms.len();
    let cols: Vec<Vec<f64>> = terms
        .iter()
        .map(|r| {
            let mut a = vec![0.0; n];
            for &(i, v) in &r.entries {
                if free[i] {
                    a[i] = v;
                }
            }
            a
        })
        .collect();
    let y: Vec<Vec<f64>> = cols.iter().map(|a| solve(a)).collect();
    // S = C^{-1} + A^T Y
    let mut s = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            s[i][j] = dot(&cols[i], &y[j]);
        }
        s[i][i] += 1.0 / terms[i].coef;
    }
    let mut r: Vec<f64> = cols.iter().map(|a| dot(a, &z)).collect();
    // Gaussian elimination with partial pivoting on the small system
    for c in 0..m {
        let p = (c..m).max_by(|&a, &b| s[a][c].abs().total_cmp(&s[b][c].abs()))?;
        s.swap(c, p);
        r.swap(c, p);
        if s[c][c] == 0.0 {
            return None;
        }
        for row in c + 1..m {
            let f = s[row][c] / s[c][c];
            for col in c..m {
                s[row][col] -= f * s[c][col];
            }
            r[row] -= f * r[c];
        }
    }
    let mut w = vec![0.0; m];
    for c in (0..m).rev() {
        let acc: f64 = (c + 1..m).map(|j| s[c][j] * w[j]).sum();
        w[c] = (r[c] - acc) / s[c][c];
    }
    let mut x = z;
    for (yj, wj) in y.iter().zip(&w) {
        for (xi, yi) in x.iter_mut().zip(yj) {
            *xi -= wj * yi;
        }
    }
    Some(x)
}

/// Jacobi-preconditioned conjugate gradients on the free set. `None` on
/// detected negative curvature.
fn solve_cg(model: &HessianModel, shift_diag: &[f64], free: &[bool], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mask = |v: &mut [f64]| {
        for (x, f) in v.iter_mut().zip(free) {
            if !*f {
                *x = 0.0;
            }
        }
    };
    let diag: Vec<f64> = model
        .base
        .diag()
        .iter()
        .zip(shift_diag)
        .map(|(d, s)| (d + s).abs().max(1e-300))
        .collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        model.apply(v, out);
        for i in 0..n {
            out[i] += shift_diag[i] * v[i];
        }
        mask(out);
    };
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    mask(&mut r);
    let rnorm0 = dot(&r, &r).sqrt();
    if rnorm0 == 0.0 {
        return Some(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..(4 * n).max(200) {
        apply(&p, &mut ap);
        let curv = dot(&p, &ap);
        if curv <= 0.0 || !curv.is_finite() {
            return None;
        }
        let alpha = rz / curv;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= 1e-12 * rnorm0 {
            break;
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Some(x)
}

fn newton_direction(
    model: &HessianModel,
    weights: &[f64],
    free: &[bool],
    g: &[f64],
    shift: &mut f64,
) -> Option<Vec<f64>> {
    let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
    let one_d = model.base.grid().dim() == 1 && !model.base.grid().is_periodic_x1();
    for _ in 0..20 {
        let shift_diag: Vec<f64> = weights.iter().map(|w| *shift * w).collect();
        let d = if one_d {
            let diag: Vec<f64> = model.base.diag().iter().zip(&shift_diag).map(|(a, b)| a + b).collect();
            solve_tridiagonal(model, &diag, free, &rhs)
        } else {
            solve_cg(model, &shift_diag, free, &rhs)
        };
        match d {
            Some(d) if d.iter().all(|v| v.is_finite()) => return Some(d),
            _ => *shift = (*shift * 10.0).max(MIN_SHIFT),
        }
    }
    None
}

fn lbfgs_direction(memory: &[(Vec<f64>, Vec<f64>)], weights: &[f64], free: &[bool], g: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().zip(free).map(|(v, f)| if *f { *v } else { 0.0 }).collect();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    let mut r: Vec<f64> = match memory.last() {
        Some((s, y)) => {
            let gamma = dot(s, y) / dot(y, y);
            q.iter().map(|v| gamma * v).collect()
        }
        None => q.iter().zip(weights).map(|(v, w)| v / w).collect(),
    };
    for ((s, y), (a, rho)) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &r);
        for (ri, si) in r.iter_mut().zip(s) {
            *ri += (a - b) * si;
        }
    }
    r.iter()
        .zip(free)
        .map(|(v, f)| if *f { -v } else { 0.0 })
        .collect()
}

fn residual(g: &[f64], weights: &[f64], free: &[bool]) -> f64 {
    g.iter()
        .zip(weights)
        .zip(free)
        .filter(|(_, f)| **f)
        .map(|((v, w), _)| (v / w).abs())
        .fold(0.0, f64::max)
}

/// Minimize `obj` over the feasible set starting at `x0`.
pub fn minimize(
    obj: &dyn Objective,
    proj: &Projection<'_>,
    x0: Vec<f64>,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    minimize_from(obj, proj, x0, opts, OptimizerState::default())
}

/// As [`minimize`], continuing from a saved state.
pub fn minimize_from(
    obj: &dyn Objective,
    proj: &Projection<'_>,
    mut x: Vec<f64>,
    opts: &MinimizeOptions,
    mut state: OptimizerState,
) -> Result<MinimizeResult> {
    let n = x.len();
    let weights = obj.weights();
    if weights.len() != n || proj.fixed().len() != n {
        return Err(Error::Shape("objective, projection and iterate sizes differ".into()));
    }
    proj.project(&mut x);
    let mut f = obj.value(&x);
    if !f.is_finite() {
        return Err(Error::Numerical(format!("objective is {f} at the start point")));
    }
    if state.trace.is_empty() {
        state.trace.push(f);
    }
    let mut g = vec![0.0; n];
    obj.gradient(&x, &mut g);
    let mut g_new = vec![0.0; n];

    loop {
        let free = proj.free_set(&x, &g);
        let res = residual(&g, &weights, &free);
        if res <= opts.gtol {
            return Ok(MinimizeResult {
                value: f,
                iterations: state.iteration,
                residual: res,
                trace: state.trace.clone(),
                x,
                state,
            });
        }
        if state.iteration >= opts.max_iters {
            return Err(Error::Convergence {
                iterations: state.iteration,
                residual: res,
                best: Box::new(x),
            });
        }
        if opts.stop_after.is_some_and(|s| state.iteration >= s) {
            return Err(Error::Interrupted {
                stage: String::new(),
                iterations: state.iteration,
                state: Box::new(state),
                iterate: Box::new(x),
            });
        }

        let model = obj.hessian(&x);
        // (direction, is_newton, unit step is natural)
        let mut candidates: Vec<(Vec<f64>, bool, bool)> = Vec::with_capacity(2);
        if let Some(m) = &model {
            if let Some(d) = newton_direction(m, &weights, &free, &g, &mut state.shift) {
                candidates.push((d, true, true));
            }
        } else if !state.memory.is_empty() {
            candidates.push((lbfgs_direction(&state.memory, &weights, &free, &g), false, true));
        }
        let steepest: Vec<f64> = g
            .iter()
            .zip(&weights)
            .zip(&free)
            .map(|((v, w), f)| if *f { -v / w } else { 0.0 })
            .collect();
        candidates.push((steepest, false, false));

        let mut accepted = None;
        for (d, is_newton, unit) in candidates {
            let slope = dot(&g, &d);
            if !(slope < 0.0) {
                continue;
            }
            // first trial of a plain gradient step moves at most 0.1 per node
            let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let mut t = if unit { 1.0 } else { (0.1 / dmax).min(1.0) };
            for bt in 0..MAX_BACKTRACKS {
                let mut xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                proj.project(&mut xt);
                let ft = obj.value(&xt);
                if ft.is_finite() {
                    let step_slope: f64 = g.iter().zip(xt.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
                    let floor = ROUNDING_FLOOR * (1.0 + f.abs());
                    if ft <= f + SUFFICIENT_DECREASE * step_slope {
                        accepted = Some((xt, ft));
                        break;
                    }
                    // full Newton steps whose energy change is below rounding
                    // are accepted when they reduce the residual
                    if bt == 0 && is_newton && (ft - f).abs() <= floor {
                        obj.gradient(&xt, &mut g_new);
                        let free_t = proj.free_set(&xt, &g_new);
                        if residual(&g_new, &weights, &free_t) < res {
                            accepted = Some((xt, ft));
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                if is_newton && state.shift > 0.0 {
                    state.shift = if state.shift <= MIN_SHIFT { 0.0 } else { state.shift / 10.0 };
                }
                break;
            } else if is_newton {
                state.shift = (state.shift * 10.0).max(MIN_SHIFT);
            }
        }

        let Some((x_new, f_new)) = accepted else {
            return Err(Error::Convergence {
                iterations: state.iteration,
                residual: res,
                best: Box::new(x),
            });
        };
        obj.gradient(&x_new, &mut g_new);
        if model.is_none() {
            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            if dot(&s, &y) > 1e-300 {
                state.memory.push((s, y));
                if state.memory.len() > LBFGS_MEMORY {
                    state.memory.remove(0);
                }
            }
        }
        x = x_new;
        f = f_new;
        std::mem::swap(&mut g, &mut g_new);
        state.iteration += 1;
        state.trace.push(f);
    }
}
