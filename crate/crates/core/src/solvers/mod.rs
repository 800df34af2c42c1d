//! Heteroclinic, constrained `2K`-transition and infinite-transition solvers.

mod heteroclinic;
mod infinite;
mod multi;
mod penalty;
mod spec;

use serde::{Deserialize, Serialize};

pub use heteroclinic::{kink_position, kink_positions, solve_heteroclinic, solve_heteroclinic_from, Direction, HeteroPair};
pub use infinite::{approximate_infinite, window_l2, InfiniteMode, InfiniteResult};
pub use multi::{
    build_guess_with_centers, build_initial_guess, check_admissible, constraint_margins, forbidden_rho_samples,
    multi_start_agreement, scaled_spec, scan_geometry, solve_multitransition, solve_multitransition_from, GeometryScan,
    GeometryTrial, ResumePoint, StartAgreement,
};
pub(crate) use penalty::minimize_ordered;
pub use penalty::{project_feasible, PenaltyKind, PenaltyObjective};
pub use spec::{Target, TileConstraint, TransitionSpec, MIN_SEPARATION};

use crate::energy::{compute_c0, end_mask, grad_j1, strip_energy, CellMinimum};
use crate::error::Result;
use crate::grid::{tile_l2_distance, Field, GridSpec};
use crate::optimize::MinimizeOptions;
use crate::potential::Potential;

/// Potential together with its cell-problem data at one resolution.
#[derive(Clone, Debug)]
pub struct Problem {
    pub potential: Potential,
    pub dim: usize,
    pub points_per_unit: usize,
    pub c0: f64,
    /// Cell minimizer `v0` on the unit torus; `w0 = v0 + 1`.
    pub cell: Field,
}

impl Problem {
    /// Solve the cell problem and package the result.
    pub fn new(potential: Potential, dim: usize, points_per_unit: usize, opts: &MinimizeOptions) -> Result<Self> {
        let torus = GridSpec::torus(dim, points_per_unit)?;
        let CellMinimum { c0, minimizer, .. } = compute_c0(&potential, torus, opts, 0)?;
        Ok(Self {
            potential,
            dim,
            points_per_unit,
            c0,
            cell: minimizer,
        })
    }

    pub fn strip(&self, left: i64, right: i64) -> Result<GridSpec> {
        GridSpec::strip(self.dim, left, right, self.points_per_unit)
    }

    pub fn v0(&self, grid: GridSpec) -> Result<Field> {
        Field::periodic_extension(&self.cell, grid)
    }

    pub fn w0(&self, grid: GridSpec) -> Result<Field> {
        Ok(self.v0(grid)?.shifted(1))
    }

    pub fn target(&self, grid: GridSpec, t: Target) -> Result<Field> {
        match t {
            Target::V0 => self.v0(grid),
            Target::W0 => self.w0(grid),
        }
    }

    /// `||w0 - v0||_{L^2(T_0)}`.
    pub fn rho_bar(&self) -> Result<f64> {
        let g = self.strip(-2, 2)?;
        tile_l2_distance(&self.w0(g)?, &self.v0(g)?, 0)
    }

    pub fn energy(&self, u: &Field) -> f64 {
        strip_energy(u, &self.potential, self.c0)
    }

    /// Max of `|-Δu + F_u|` over nodes that are not strip ends.
    pub fn pde_residual(&self, u: &Field) -> Result<f64> {
        let mask = end_mask(u.grid());
        let r = grad_j1(u, &self.potential, &mask)?;
        Ok(r.values().iter().fold(0.0, |a, v| a.max(v.abs())))
    }

    /// Residual restricted to the nodes of one tile (faces excluded at strip ends).
    pub fn tile_residual(&self, u: &Field, tile: i64) -> Result<f64> {
        let g = *u.grid();
        let mask = end_mask(&g);
        let r = grad_j1(u, &self.potential, &mask)?;
        let tl = g.transverse_len();
        let lines = g.tile_lines(tile)?;
        Ok((lines.start() * tl..(lines.end() + 1) * tl)
            .map(|i| r.value(i).abs())
            .fold(0.0, f64::max))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    pub minimize: MinimizeOptions,
    /// Free tiles beyond the outermost constraint region.
    pub pad: i64,
    /// Heteroclinics used to seed multi-transition runs live on `[-L, L]`.
    pub hetero_half_length: i64,
    pub penalty_start: f64,
    pub penalty_factor: f64,
    pub penalty_rounds: usize,
    /// Allowed constraint violation (in L^2 distance) after the last round.
    pub feasibility_tol: f64,
    /// Transition pieces keep this many tiles on each side of their centre
    /// before being glued to the flat states.
    pub glue_halfwidth: i64,
    /// A constraint is strictly inactive when its margin exceeds
    /// `inactive_factor * rho_bar`.
    pub inactive_factor: f64,
    /// Chosen rho must differ from every sampled forbidden value by more.
    pub admissibility_gap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            minimize: MinimizeOptions {
                gtol: 1e-8 * 32.0,
                max_iters: 500,
                stop_after: None,
            },
            pad: 10,
            hetero_half_length: 20,
            penalty_start: 1e2,
            penalty_factor: 10.0,
            penalty_rounds: 10,
            feasibility_tol: 1e-6,
            glue_halfwidth: 1,
            inactive_factor: 1e-4,
            admissibility_gap: 1e-3,
        }
    }
}

impl SolverOptions {
    pub fn for_resolution(points_per_unit: usize) -> Self {
        let mut o = Self::default();
        o.minimize.gtol = 1e-8 * points_per_unit as f64;
        o
    }
}

/// Slack of one tile constraint at the returned minimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMargin {
    pub family: usize,
    pub tile: i64,
    pub rho: f64,
    pub distance: f64,
    /// `rho - distance`
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub minimizer: Field,
    /// Strip `J_1` of the minimizer: `c_1` or `b_{m,l}`.
    pub objective: f64,
    pub margins: Vec<ConstraintMargin>,
    pub pde_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Every margin exceeds the inactivity threshold.
    pub strictly_inactive: bool,
    /// Objective trace of the last minimization.
    pub trace: Vec<f64>,
    /// Strip `J_1` at the end of each penalty round.
    pub round_energies: Vec<f64>,
}

impl SolveReport {
    pub fn min_margin(&self) -> Option<f64> {
        self.margins.iter().map(|m| m.margin).reduce(f64::min)
    }

    /// Summary JSON: `{objective, margins[], pde_residual, iterations, converged}`.
    pub fn to_json(&self, config_hash: &str) -> serde_json::Value {
        serde_json::json!({
            "objective": self.objective,
            "margins": self.margins.iter().map(|m| m.margin).collect::<Vec<_>>(),
            "constraints": self.margins,
            "pde_residual": self.pde_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "strictly_inactive": self.strictly_inactive,
            "round_energies": self.round_energies,
            "config_hash": config_hash,
        })
    }
}
