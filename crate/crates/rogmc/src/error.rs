use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for the whole pipeline. Variants carry enough context
/// (paths, line numbers, offending values) that a CLI user can act on the
/// message without a stack trace.
#[derive(Error, Debug)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("k-core filtering with k = {k} removed every interaction")]
    KCoreEmpty { k: usize },

    #[error("duplicate (user, item) pair: ({user}, {item})")]
    DuplicatePair { user: i64, item: i64 },

    #[error("user {user} has only {count} interactions; need at least 3 to split")]
    UserTooSmall { user: u32, count: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: total loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("checkpoint field '{field}': {msg}")]
    Checkpoint { field: String, msg: String },

    #[error("unknown variant '{0}'")]
    UnknownVariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
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

pub type Result<T> = std::result::Result<T, Error>;
