//! Crate-wide error type.

use thiserror::Error;

/// All fallible operations in this crate return this error.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up (rank, extents, axis bounds).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A configuration value is invalid or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input is outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An API contract was violated (e.g. backward called twice).
    #[error("contract error: {0}")]
    Contract(String),

    /// A batch contains no usable pixels.
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    /// Scene generation could not satisfy its invariants.
    #[error("generation error: {0}")]
    Generation(String),

    /// A checkpoint could not be loaded against the requested configuration.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// One or more gradient checks failed.
    #[error("gradient check failure: {0}")]
    GradCheck(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
