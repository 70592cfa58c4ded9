use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input dimensionality {0} is unsupported (expected 1, 2 or 3)")]
    UnsupportedDims(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("quadrature oracle did not converge (last change {last_change:e} at resolution {resolution})")]
    OracleNotConverged { resolution: usize, last_change: f64 },
    #[error("model does not match method {method}: {reason}")]
    ModelMismatch { method: String, reason: String },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("grid format: {0}")]
    GridFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
