use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of the operation
    /// (non-normalized state, zero-probability conditioning, invalid distribution).
    #[error("domain error: {0}")]
    Domain(String),

    /// A numeric parameter is out of its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The inputs are individually valid but the requested combination is not
    /// supported by the model (e.g. a non-factorizing kernel passed to the
    /// product-form integrator).
    #[error("contract error: {0}")]
    Contract(String),

    /// Recorded data cannot support the requested analysis.
    #[error("data error: {0}")]
    Data(String),

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error in {}: row {row}, column {column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
