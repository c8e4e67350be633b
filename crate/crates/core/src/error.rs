use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the core crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid hyperparameter, shape or option combination.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called out of order (e.g. backward before forward).
    #[error("usage error: {0}")]
    Usage(String),

    /// Optimization produced a non-finite value.
    #[error("training error at iteration {iteration}: {message}")]
    Training { iteration: usize, message: String },

    /// Malformed input data; `line` is 1-based.
    #[error("ingestion error at line {line}: {message}")]
    Ingestion { line: usize, message: String },

    #[error("metric error: {0}")]
    Metric(String),

    /// A checkpoint or report file could not be parsed.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
