use thiserror::Error;

use crate::optimize::OptimizerState;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("did not converge after {iterations} iterations (projected gradient {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        best: Box<Vec<f64>>,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("constraints infeasible: max violation {violation:e} after {rounds} penalty rounds")]
    Infeasible { violation: f64, rounds: usize },

    #[error("interrupted at stage {stage} after {iterations} iterations")]
    Interrupted {
        stage: String,
        iterations: usize,
        state: Box<OptimizerState>,
        iterate: Box<Vec<f64>>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
