//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its mathematical domain (non-positive
    /// resistance, ratio outside (0, 1], bad split ratios, ...).
    #[error("parameter domain error: {0}")]
    Domain(String),

    /// An index is out of range for the structure it addresses.
    #[error("index error: {0}")]
    Index(String),

    /// Malformed or inconsistent data (NaN samples, ragged CSV rows,
    /// mismatched signal lengths, non-uniform sampling, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A numerical procedure failed (singular solve, no feasible restart).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
