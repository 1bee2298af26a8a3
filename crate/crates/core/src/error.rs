use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::schema::LayoutViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("corruption in {path}: {reason}")]
    Corruption { path: PathBuf, reason: String },

    #[error("invalid tree parameters: {0}")]
    InvalidParams(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(#[from] LayoutViolation),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("engine is read-only after a background failure: {0}")]
    BackgroundFailure(String),

    #[error("engine is closed")]
    Closed,
}

impl Error {
    pub(crate) fn corruption(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corruption {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            reason: reason.into(),
        }
    }
}
