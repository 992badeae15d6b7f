//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A model or distribution parameter violates a construction invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Requested moment does not exist for the given distribution.
    #[error("divergent moment: {0}")]
    DivergentMoment(String),

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature did not converge: {0}")]
    QuadratureFailed(String),

    /// An internal numeric invariant was violated (non-finite value,
    /// spectral radius out of range, contradictory Monte Carlo result).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Path simulation produced a non-finite value; `index` is the
    /// 0-based step counted from the start of the simulation
    /// (burn-in included).
    #[error("simulated path exploded at step {index}")]
    Explosion { index: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("optimization did not converge: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn invalid_parameter(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
