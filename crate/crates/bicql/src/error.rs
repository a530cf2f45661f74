use thiserror::Error;

pub type Result<T> = std::result::Result<T, BicqlError>;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum BicqlError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// An iterative solver hit its iteration cap before reaching tolerance.
    #[error("no convergence after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    /// A direct linear solve produced a residual above the accepted bound.
    #[error("linear solve failed (residual {residual:.3e})")]
    LinearSolve { residual: f64 },

    /// A gradient step produced a non-finite loss.
    #[error("non-finite loss at step {step}")]
    Divergence { step: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BicqlError {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        BicqlError::InvalidInput(msg.into())
    }

    pub fn invalid_state(msg: impl Into<String>) -> Self {
        BicqlError::InvalidState(msg.into())
    }
}
