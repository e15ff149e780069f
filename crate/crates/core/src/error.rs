//! Crate-wide error type.
//!
//! Variants map onto the process exit codes used by the `dwd` binary:
//! I/O and malformed-file errors, validation (contract) errors, and
//! numeric failures (NaN losses, degenerate running means).

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, DwdError>;

#[derive(Debug, Error)]
pub enum DwdError {
    /// A contract violation: bad config value, mismatched dimensions,
    /// an annotation outside its page, and similar.
    #[error("validation: {0}")]
    Validation(String),

    /// Underlying I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A binary map or checkpoint file that does not match its header
    /// contract (bad magic, wrong dtype, truncated payload).
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// A malformed line in a text file.
    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// Non-finite values where finite ones are required.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl DwdError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DwdError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        DwdError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn validation(reason: impl Into<String>) -> Self {
        DwdError::Validation(reason.into())
    }
}
