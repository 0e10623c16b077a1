use std::io;

use thiserror::Error;

/// Errors produced anywhere in the compression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; the string names the offending field.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular matrix: pivot {pivot:e} at column {column}")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("solver failure: {reason} (relative residual {residual:e})")]
    SolverFailure { reason: String, residual: f64 },

    /// A binary file did not match the expected layout.
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("architecture mismatch: expected {expected:?}, found {found:?}")]
    ArchitectureMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("training diverged in epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    /// A local problem failed while producing data for `(family, sample, element)`.
    #[error("sample generation failed for family {family}, sample {sample}, element {element}: {source}")]
    Sample {
        family: String,
        sample: usize,
        element: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    /// True for errors that stem from user input rather than runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::ArchitectureMismatch { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
