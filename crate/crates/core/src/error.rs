//! Crate-wide error type.
//!
//! Variants are grouped by where they surface: file IO and parsing, data
//! validation, configuration, and numeric failures during training. The CLI
//! maps every variant to exit code 2; usage errors never reach this type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("duplicate id {id:?}")]
    DuplicateId { id: String },

    #[error("unknown id {id:?} ({context})")]
    UnknownId { id: String, context: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("shape mismatch in {layer}: {msg}")]
    Shape { layer: String, msg: String },

    #[error("parameter cache is stale: forward ran against version {cached} but parameters are at version {current}")]
    StaleCache { cached: u64, current: u64 },

    #[error("non-finite gradient in parameter {param:?}")]
    NonFiniteGrad { param: String },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("support queue is empty")]
    EmptyQueue,

    #[error("no neighbor candidates: {0}")]
    NoNeighbor(String),
}

impl Error {
    /// Wraps a `std::io::Error` with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
