use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("dimension mismatch at layer {layer}: expected {expected}, got {got}")]
    Dimension {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error(
        "class mismatch: instance declares class {declared}, network classifies it as {actual}"
    )]
    ClassMismatch { declared: usize, actual: usize },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid ordering: {0}")]
    InvalidOrdering(String),

    #[error(
        "exact solver refused instance with {size} elements (cap {cap}); use the greedy solver"
    )]
    CapExceeded { size: usize, cap: usize },

    #[error(transparent)]
    Verify(#[from] crate::verifier::VerifyError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Parse {
            what: what.into(),
            source,
        }
    }

    /// True for errors raised because a budget ran out rather than bad input.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::Verify(crate::verifier::VerifyError::Budget { .. })
        )
    }
}
