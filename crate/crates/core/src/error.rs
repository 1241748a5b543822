use thiserror::Error;

/// Errors raised by the transport, annealing, duality and oracle routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    Dimension {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("infeasible plan: row residual {row_residual:e}, column residual {col_residual:e}")]
    Feasibility { row_residual: f64, col_residual: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("no convergence at beta = {beta} after {iterations} sweeps (residual {residual:e})")]
    Convergence {
        beta: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("zero-temperature limit not converged: {0}")]
    NotConverged(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
