use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed raster header: {0}")]
    BadHeader(String),

    #[error("truncated raster body: expected {expected} bytes, found {found}")]
    TruncatedBody { expected: usize, found: usize },

    #[error("non-finite value at body index {index}")]
    NonFinite { index: usize },

    #[error("invalid dimensions: {0}")]
    Dimensions(String),

    #[error("labels line {line}: {msg}")]
    Labels { line: usize, msg: String },

    #[error("rule line {line}: {msg}")]
    Rule { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("malformed model checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed image: {0}")]
    Image(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
