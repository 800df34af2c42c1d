//! Heteroclinic minimizers between the adjacent cell minimizers `v0` and `w0`.

use std::f64::consts::{FRAC_2_PI, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use super::penalty::{minimize_ordered, PenaltyKind};
use super::{Problem, ResumePoint, SolveReport, SolverOptions};
use crate::energy::end_mask;
use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::optimize::{minimize, minimize_from, MinimizeOptions, MinimizeResult, Objective, Projection};

/// Fewest tiles a heteroclinic strip may have.
pub const MIN_TILES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `v0` at the left end, `w0` at the right end.
    VW,
    /// `w0` at the left end, `v0` at the right end.
    WV,
}

impl Direction {
    pub fn id(self) -> &'static str {
        match self {
            Direction::VW => "vw",
            Direction::WV => "wv",
        }
    }
}

/// Run one minimization, continuing from `resume` when it names this stage.
pub(crate) fn run_stage(
    stage: &str,
    obj: &dyn Objective,
    proj: &Projection<'_>,
    x0: Vec<f64>,
    opts: &MinimizeOptions,
    resume: Option<&ResumePoint>,
) -> Result<MinimizeResult> {
    let out = match resume {
        Some(r) if r.stage == stage => minimize_from(obj, proj, r.iterate.clone(), opts, r.state.clone()),
        _ => minimize(obj, proj, x0, opts),
    };
    out.map_err(|e| match e {
        Error::Interrupted {
            iterations,
            state,
            iterate,
            ..
        } => Error::Interrupted {
            stage: stage.to_string(),
            iterations,
            state,
            iterate,
        },
        other => other,
    })
}

/// Offsets bounds expressing `v0 <= u <= w0` for the wells of `u`.
pub(crate) fn box_bounds(u: &Field, v0: &Field) -> (Vec<f64>, Vec<f64>) {
    (0..u.len())
        .map(|i| {
            let lo = (v0.wells()[i] - u.wells()[i]) as f64 + v0.offsets()[i];
            (lo, lo + 1.0)
        })
        .unzip()
}

/// `v0 + theta (w0 - v0)` given `theta` and `1 - theta` separately so both
/// tails keep their relative precision.
pub(crate) fn set_fraction(u: &mut Field, i: usize, v0: &Field, theta: f64, rest: f64) {
    if theta <= 0.5 {
        u.set_parts(i, v0.wells()[i], v0.offsets()[i] + theta);
    } else {
        u.set_parts(i, v0.wells()[i] + 1, v0.offsets()[i] - rest);
    }
}

/// Standard kink profile `theta(s) = (2/pi) atan(exp(kappa s))` and `1 - theta`.
fn kink(s: f64) -> (f64, f64) {
    let kappa = PI * SQRT_2;
    (FRAC_2_PI * (kappa * s).exp().atan(), FRAC_2_PI * (-kappa * s).exp().atan())
}

/// Smooth transition centred at `center`, running `v0 -> w0` or `w0 -> v0`.
pub(crate) fn kink_guess(problem: &Problem, grid: GridSpec, center: f64, dir: Direction) -> Result<Field> {
    let v0 = problem.v0(grid)?;
    let mut u = v0.clone();
    let tl = grid.transverse_len();
    for k in 0..grid.nx1() {
        let s = grid.x1(k) - center;
        let (theta, rest) = match dir {
            Direction::VW => kink(s),
            Direction::WV => kink(-s),
        };
        for t in 0..tl {
            set_fraction(&mut u, k * tl + t, &v0, theta, rest);
        }
    }
    Ok(u)
}

/// Copy the first grid line of `left` and the last of `right` into `u`.
pub(crate) fn pin_ends(u: &mut Field, left: &Field, right: &Field) {
    let g = *u.grid();
    let tl = g.transverse_len();
    let last = (g.nx1() - 1) * tl;
    for t in 0..tl {
        u.copy_node(t, left, t);
        u.copy_node(last + t, right, last + t);
    }
}

/// x1 where the transverse mean of `u - v0` first crosses `1/2`.
pub fn kink_position(u: &Field, v0: &Field) -> Result<f64> {
    kink_positions(u, v0)?
        .first()
        .copied()
        .ok_or_else(|| Error::Numerical("field never crosses the midpoint between v0 and w0".into()))
}

/// Every x1 where the transverse mean of `u - v0` crosses `1/2`, in order.
pub fn kink_positions(u: &Field, v0: &Field) -> Result<Vec<f64>> {
    let g = *u.grid();
    g.ensure_same(v0.grid())?;
    let tl = g.transverse_len();
    let mean = |k: usize| (0..tl).map(|t| u.diff_at(v0, k * tl + t)).sum::<f64>() / tl as f64 - 0.5;
    let mut out = Vec::new();
    let mut a = mean(0);
    for k in 0..g.nx1() - 1 {
        let b = mean(k + 1);
        if a == 0.0 {
            out.push(g.x1(k));
        } else if a * b < 0.0 {
            out.push(g.x1(k) + g.h() * a / (a - b));
        }
        a = b;
    }
    Ok(out)
}

/// Heteroclinic minimizer on `grid` with Dirichlet data `v0`/`w0` at the ends.
pub fn solve_heteroclinic(problem: &Problem, grid: GridSpec, dir: Direction, opts: &SolverOptions) -> Result<SolveReport> {
    solve_heteroclinic_from(problem, grid, dir, opts, None)
}

pub fn solve_heteroclinic_from(
    problem: &Problem,
    grid: GridSpec,
    dir: Direction,
    opts: &SolverOptions,
    resume: Option<&ResumePoint>,
) -> Result<SolveReport> {
    if grid.is_periodic_x1() || grid.num_tiles() < MIN_TILES {
        return Err(Error::Config(format!(
            "heteroclinic strip needs at least {MIN_TILES} tiles, got [{}, {}]",
            grid.left(),
            grid.right()
        )));
    }
    if grid.dim() != problem.dim || grid.points_per_unit() != problem.points_per_unit {
        return Err(Error::Shape("strip does not match the problem resolution".into()));
    }
    // off-centre so a symmetric start does not sit on a pinning saddle
    let center = 0.5 * (grid.left() + grid.right()) as f64 + 0.3;
    let mut guess = kink_guess(problem, grid, center, dir)?;
    let (v0, w0) = (problem.v0(grid)?, problem.w0(grid)?);
    match dir {
        Direction::VW => pin_ends(&mut guess, &v0, &w0),
        Direction::WV => pin_ends(&mut guess, &w0, &v0),
    }
    let fixed = end_mask(&grid);
    let stage = format!("hetero_{}", dir.id());
    let (u, r, iterations) = minimize_ordered(problem, guess, &fixed, &[], 0.0, PenaltyKind::Hinge, &opts.minimize, &stage, resume)?;
    let objective = problem.energy(&u);
    Ok(SolveReport {
        pde_residual: problem.pde_residual(&u)?,
        minimizer: u,
        objective,
        margins: vec![],
        iterations,
        converged: true,
        strictly_inactive: true,
        trace: r.trace,
        round_energies: vec![objective],
    })
}

/// Both heteroclinic directions on `[-L, L]`.
#[derive(Clone, Debug)]
pub struct HeteroPair {
    pub vw: SolveReport,
    pub wv: SolveReport,
}

impl HeteroPair {
    pub fn solve(problem: &Problem, opts: &SolverOptions) -> Result<Self> {
        Self::solve_from(problem, opts, None)
    }

    pub fn solve_from(problem: &Problem, opts: &SolverOptions, resume: Option<&ResumePoint>) -> Result<Self> {
        let half = opts.hetero_half_length;
        let grid = problem.strip(-half, half)?;
        Ok(Self {
            vw: solve_heteroclinic_from(problem, grid, Direction::VW, opts, resume)?,
            wv: solve_heteroclinic_from(problem, grid, Direction::WV, opts, resume)?,
        })
    }

    /// `c_1(v0, w0)`
    pub fn c1(&self) -> f64 {
        self.vw.objective
    }

    /// `c_1(w0, v0)`
    pub fn c1_prime(&self) -> f64 {
        self.wv.objective
    }

    pub fn get(&self, dir: Direction) -> &SolveReport {
        match dir {
            Direction::VW => &self.vw,
            Direction::WV => &self.wv,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Potential;

    fn problem(eps: f64, n: usize) -> Problem {
        let pot = if eps == 0.0 {
            Potential::pendulum()
        } else {
            Potential::pendulum_modulated(eps).unwrap()
        };
        Problem::new(pot, 1, n, &MinimizeOptions::for_resolution(n)).unwrap()
    }

    #[test]
    fn kink_guess_keeps_tail_precision() {
        let p = problem(0.0, 16);
        let g = p.strip(-20, 20).unwrap();
        let u = kink_guess(&p, g, 0.0, Direction::VW).unwrap();
        let last = g.nx1() - 2;
        // 1 - u is ~1e-38 at x = 20 and must not round to zero
        assert_eq!(u.wells()[last], 1);
        assert!(u.offsets()[last] < 0.0 && u.offsets()[last] > -1e-30);
        assert!(u.value(1) > 0.0 && u.value(1) < 1e-30);
        assert!((kink_position(&u, &p.v0(g).unwrap()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn short_strip_is_a_config_error() {
        let p = problem(0.3, 16);
        let g = p.strip(-3, 3).unwrap();
        let e = solve_heteroclinic(&p, g, Direction::VW, &SolverOptions::for_resolution(16));
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn modulated_heteroclinic_pins_at_half_integer() {
        let p = problem(0.3, 16);
        let g = p.strip(-10, 10).unwrap();
        let r = solve_heteroclinic(&p, g, Direction::VW, &SolverOptions::for_resolution(16)).unwrap();
        let x = kink_position(&r.minimizer, &p.v0(g).unwrap()).unwrap();
        assert!((x - x.floor() - 0.5).abs() < 0.05, "kink at {x}");
        assert!(r.pde_residual <= 1e-8 * 16.0);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0] + 1e-15 * (1.0 + w[0].abs())));
    }
}
