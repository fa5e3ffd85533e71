//! Serialization: correspondence and group JSON, PLY clouds, gray images,
//! scene specs, seed distances and the TOML config.

pub mod config;
pub mod corr;
pub mod group;
pub mod imgio;
pub mod ply;
pub mod scene;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty cloud: refusing to write")]
    EmptyCloud,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json error at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Json { line: e.line(), column: e.column(), message: e.to_string() }
    }
}
