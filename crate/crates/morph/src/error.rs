//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad hyperparameter, missing field, bad layer dims).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input file. Line numbers are 1-based and include headers.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input data violates an operation's preconditions.
    #[error("input error: {0}")]
    Input(String),

    /// Dimension mismatch between model and data.
    #[error("shape error: {0}")]
    Shape(String),

    /// Monthly batches replayed out of order.
    #[error("sequencing error: {0}")]
    Sequencing(String),

    /// An internal invariant was violated (indicates a bug, not bad input).
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
