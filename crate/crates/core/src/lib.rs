//! Variational construction of multi- and infinite-transition solutions of
//! `-Δu + F_u(x, u) = 0` on truncated cylinders `[a,b] x T^{n-1}`.
//!
//! The crate is organized bottom-up: [`grid`] and [`potential`] define the
//! discretization and the nonlinearity, [`energy`] the renormalized tile
//! energies, [`optimize`] the shared bound-constrained minimizer, [`solvers`]
//! the heteroclinic, constrained multi-transition and infinite-transition
//! constructions, and [`verify`] the numerical checks run on their output.

pub mod config;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod optimize;
pub mod potential;
pub mod solvers;
pub mod verify;

pub use energy::{
    cell_energy, compute_c0, estimate_c1, glue, grad_j1, tile_energy, window_energy, CellMinimum,
    EnergyLedger, GlueSide,
};
pub use error::{Error, Result};
pub use grid::{refine, tile_l2_distance, tile_restrict, translate, Field, GridSpec};
pub use optimize::{minimize, MinimizeOptions, Objective, Projection};
pub use potential::{Family, Potential};
pub use solvers::{Direction, InfiniteMode, Problem, SolveReport, SolverOptions, TransitionSpec};
pub use verify::{CheckResult, CheckStatus};
