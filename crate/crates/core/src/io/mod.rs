//! File formats, run and scenario configuration, synthetic scenarios.

pub mod augmented;
pub mod config;
pub mod mot;
pub mod scenario;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("byte offset {offset}: {message}")]
    Offset { offset: u64, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IoError {
    pub(crate) fn line(line: usize, message: impl Into<String>) -> Self {
        IoError::Line {
            line,
            message: message.into(),
        }
    }

    /// True for failures of the underlying file system rather than the content.
    pub fn is_io(&self) -> bool {
        matches!(self, IoError::Io(_))
    }
}
