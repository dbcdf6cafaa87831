use std::path::PathBuf;

use thiserror::Error;

use crate::hierarchy::NodeRef;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("document is empty")]
    EmptyDocument,

    #[error("document {doc_id}: object at position {position} has id {found}, expected {position}")]
    NonContiguousIds {
        doc_id: String,
        position: usize,
        found: usize,
    },

    #[error("invalid document {doc_id}: {message}")]
    InvalidDocument { doc_id: String, message: String },

    #[error("unknown node {0}")]
    UnknownNode(i64),

    #[error("expected object id {expected}, got {found}")]
    OutOfOrderInsert { expected: usize, found: usize },

    #[error("stale insertion position under {parent} (slot {slot})")]
    StalePosition { parent: NodeRef, slot: usize },

    #[error("node {node} has parent {parent}, which is not on the rightmost branch at insertion time")]
    PreorderViolation { node: usize, parent: NodeRef },

    #[error("tree/document mismatch: {0}")]
    Mismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("scorer failed: {0}")]
    Scorer(String),
}

/// Coarse error category, used by the command line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Model,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Model(_) | Error::Training(_) | Error::Scorer(_) => ErrorKind::Model,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
