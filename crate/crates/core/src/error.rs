use thiserror::Error;

use crate::cache::CacheError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A workload, scenario or provisioner parameter is out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric argument is outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A text input could not be parsed. `line` is 1-based; 0 means unknown.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Internal state disagrees with itself (e.g. an idle executor that is
    /// not part of the pool).
    #[error("inconsistent state: {0}")]
    Logic(String),

    #[error(transparent)]
    Cache(#[from] CacheError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
