use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("SMILES parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("{}:{line}: {message}", path.display())]
    MalformedRow {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("schema error in {}: {message}", path.display())]
    Schema { path: PathBuf, message: String },

    #[error("duplicate unordered pair ({left}, {right}) at line {line} (first seen at line {first_line})")]
    DuplicatePair {
        left: String,
        right: String,
        line: usize,
        first_line: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("split `{split}` has no {missing} examples")]
    MissingClass { split: String, missing: String },

    #[error("vocabulary mismatch: checkpoint expects {expected}, got {found}")]
    VocabularyMismatch { expected: String, found: String },

    #[error("invalid vocabulary file: {0}")]
    VocabularyFormat(String),

    #[error("invalid checkpoint: {0}")]
    CheckpointFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
