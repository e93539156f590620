use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// A coordinate fell outside the half-open unit cube `[0,1)^d`.
    #[error("coordinate {coord} = {value} is outside [0,1)")]
    OutOfDomain { coord: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A structural invariant that should hold by construction was violated
    /// (e.g. a point of the domain lies in no cell of a partition).
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("{0} is not differentiable at the requested point")]
    NotDifferentiable(&'static str),

    /// Smoothness metadata (C2/C3 constants) required by a theoretical
    /// bound is not available for the requested function.
    #[error("bounds unavailable: {0}")]
    BoundsUnavailable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}
