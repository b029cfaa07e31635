use std::io;

use thiserror::Error;

/// Errors produced by the term-set expansion core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid UTF-8 in input at byte offset {offset}")]
    Encoding { offset: usize },

    #[error("CoNLL-U line {line}: {message}")]
    Conllu { line: usize, message: String },

    /// An operation was asked to work on data that lacks the annotation it
    /// needs (POS tags for chunking, parses for dependency contexts).
    #[error("mode error: {0}")]
    Mode(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("similarity undefined for zero vector")]
    UndefinedSimilarity,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
