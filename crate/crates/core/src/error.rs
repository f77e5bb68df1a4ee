//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulation, twin and estimator layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameter or configuration value.
    #[error("invalid config: {0}")]
    Config(String),
    /// Buffer/grid dimension mismatch.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Numeric failure (non-finite values, empty reductions, divergence).
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
