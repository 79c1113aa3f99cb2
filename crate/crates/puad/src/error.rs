//! Crate-wide error type and the CLI exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An API precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A configuration file or key is invalid.
    #[error("invalid config: {0}")]
    Config(String),
    /// An input file does not match its expected byte/text format.
    #[error("format error: {0}")]
    Format(String),
    /// A data pool is too small for the requested split.
    #[error("insufficient capacity: {0}")]
    Capacity(String),
    /// A non-finite value surfaced where a finite one is required.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 configuration/contract, 3 I/O, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::Numeric(_) => 4,
            _ => 2,
        }
    }
}
