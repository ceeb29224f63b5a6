//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by constructors, parsers and verifiers.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid size is not a power of two at least 16.
    #[error("grid size {0} is not a power of two >= 16")]
    BadGridSize(usize),
    /// A length, exponent or measure is outside its admissible range.
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    /// A sample or derived value is NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// Text input does not match the expected format.
    #[error("parse error: {0}")]
    Parse(String),
    /// A structural invariant failed, with a counterexample description.
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub fn param(msg: impl Into<String>) -> Self {
        Error::BadParameter(msg.into())
    }
}
