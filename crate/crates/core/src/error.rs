//! Crate-wide error type.

use thiserror::Error;

/// Errors that can occur across the diarization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed on-disk data, with the offending location.
    #[error("{path}:{location}: {message}")]
    Parse {
        path: String,
        location: usize,
        message: String,
    },

    /// A configuration value outside its documented range.
    #[error("invalid config: {0}")]
    Config(String),

    /// Structurally invalid input (dimension mismatches, zero rows, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// A numerical routine failed where the contract says it must not.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
