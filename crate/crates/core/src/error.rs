use thiserror::Error;

/// Errors produced by the reduction toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    /// A matrix that must be inverted is singular to working precision.
    #[error("singular matrix ({context}); condition estimate {condition:.3e}")]
    Singular { context: String, condition: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rank error: requested {requested}, numerical rank {available}")]
    Rank { requested: usize, available: usize },

    #[error("basis error: {0}")]
    Basis(String),

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $err:expr) => {
        if !$cond {
            return Err($err);
        }
    };
}
pub(crate) use ensure;
