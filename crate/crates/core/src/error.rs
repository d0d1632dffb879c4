use std::io;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid label: {0}")]
    Label(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("no proposal cell reaches the goal threshold")]
    EmptyProposal,
    #[error("no collision-free path found")]
    NoPath,
    #[error("invalid data: {0}")]
    Data(String),
    #[error("format error{}: {message}", .sample.map(|i| format!(" in sample {i}")).unwrap_or_default())]
    Format { sample: Option<usize>, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(message: impl Into<String>) -> Self {
        Error::Format { sample: None, message: message.into() }
    }

    pub(crate) fn format_at(sample: usize, message: impl Into<String>) -> Self {
        Error::Format { sample: Some(sample), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
