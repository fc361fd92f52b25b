use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected} entries, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
