//! Error type shared by every module of the crate.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// The file is not a readable RIFF/WAVE container.
    #[error("malformed wav file {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// A readable WAVE file whose header describes something other than mono 16-bit PCM.
    #[error("unsupported wav format in {path}: {field} = {value} ({expected})")]
    UnsupportedFormat {
        path: PathBuf,
        field: &'static str,
        value: String,
        expected: &'static str,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate entry for chunk `{chunk_id}` at line {line}")]
    DuplicateEntry { chunk_id: String, line: usize },

    #[error("chunk `{chunk_id}` is assigned to folds {first} and {second}")]
    FoldConflict {
        chunk_id: String,
        first: u8,
        second: u8,
    },

    #[error("fold assignment names unknown chunk `{0}`")]
    UnknownChunk(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Not enough samples or frames to produce a single unit of output.
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("insufficient frames: need {needed}, have {available}")]
    InsufficientFrames { needed: usize, available: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("insufficient data: need at least {needed} vectors, have {available}")]
    InsufficientData { needed: usize, available: usize },

    /// One side of a one-vs-rest problem has no training material.
    #[error("class starvation for tag `{tag}`: no {side} examples")]
    ClassStarvation { tag: char, side: &'static str },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("incomplete report: {0}")]
    IncompleteReport(String),

    #[error("model file error: {0}")]
    Model(String),

    #[error("feature cache error: {0}")]
    Cache(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
