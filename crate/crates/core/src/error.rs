use thiserror::Error;

/// Errors raised by the discretization, the estimate evaluators and the
/// solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("solution diverged at time level {level} (t = {time})")]
    Divergence { level: usize, time: f64 },

    #[error("Picard iteration {iteration} diverged at time level {level} (t = {time})")]
    PicardDivergence {
        iteration: usize,
        level: usize,
        time: f64,
        trace: crate::forward_solver::SolveTrace,
    },

    #[error("Picard iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        trace: crate::forward_solver::SolveTrace,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
