use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("track generation failed after {attempts} attempts (seed {seed}): {reason}")]
    GenerationFailed { seed: u64, attempts: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged: non-finite loss at update {update}")]
    Divergence { update: u64 },

    #[error("degenerate teacher ensemble: every teacher is terminal on its first step")]
    DegenerateEnsemble,

    #[error("evaluation aborted on track {track} at step {step}: policy emitted a non-finite action")]
    NonFiniteAction { track: usize, step: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format { path: path.into(), message: message.to_string() }
    }
}
