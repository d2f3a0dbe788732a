use thiserror::Error;

/// Errors raised by the solvers and the data structures they operate on.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a precondition (shapes, ranges, symmetry).
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A numerical breakdown: singular innovation, failed factorization, non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A requested materialization exceeds the configured size cap.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    /// ODE step size fell below the underflow threshold.
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("malformed problem description: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> Error {
    Error::Numerical(msg.into())
}
