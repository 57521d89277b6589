use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed mesh record: {message}")]
    MalformedMesh {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no stage files found in {0}")]
    EmptyDirectory(PathBuf),

    #[error("tooth set mismatch: stage {stage} does not match stage 0 ({detail})")]
    ToothSetMismatch { stage: usize, detail: String },

    #[error("duplicate tooth id {id} in stage {stage}")]
    DuplicateTooth { id: u16, stage: usize },

    #[error("invalid tooth id {0}: not a valid FDI number")]
    InvalidToothId(u16),

    #[error("tooth {id}: {message}")]
    InvalidTooth { id: u16, message: String },

    #[error("model has no teeth")]
    EmptyModel,

    #[error("image dimension mismatch: {expected:?} vs {got:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },

    #[error("mask region is empty")]
    EmptyRegion,

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),

    #[error("crop rect ({x0},{y0}) side {side} out of bounds for {width}x{height} image")]
    RectOutOfBounds {
        x0: u32,
        y0: u32,
        side: u32,
        width: u32,
        height: u32,
    },

    #[error("failed to generate a non-degenerate synthetic case after {0} attempts")]
    DegenerateCase(u32),

    #[error("png error on {path}: {message}")]
    Png { path: PathBuf, message: String },

    #[error("json error on {path}: {message}")]
    Json { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
