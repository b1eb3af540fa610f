use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the clustering pipeline.
#[derive(Debug, Error)]
pub enum AlrrError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An iterate or intermediate quantity stopped being finite.
    #[error("numerical failure in step `{step}` at iteration {iteration}: {detail}")]
    NumericalFailure {
        step: &'static str,
        iteration: usize,
        detail: String,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, AlrrError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(AlrrError::InvalidArgument(msg.into()))
}

impl AlrrError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AlrrError::Io {
            path: path.into(),
            source,
        }
    }
}
