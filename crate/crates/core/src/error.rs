use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("empty domain: {0}")]
    EmptyDomain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("non-convergence: {0}")]
    NonConvergence(String),
    #[error("certificate violated: {0}")]
    Certificate(String),
    #[error("malformed input: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn out_of_range(msg: impl Into<String>) -> Error {
    Error::OutOfRange(msg.into())
}
