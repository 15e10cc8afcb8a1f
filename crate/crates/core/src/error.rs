use thiserror::Error;

/// Errors raised by the laboratory.
///
/// The variants follow the failure classes used throughout the crate: bad
/// arguments, values outside a function's domain, violated preconditions of a
/// bound, and numerical procedures that did not converge.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("inconsistent configuration: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
