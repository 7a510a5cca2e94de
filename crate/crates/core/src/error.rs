use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Load {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Format {
        file: String,
        line: usize,
        message: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("time budget exhausted: {0}")]
    Budget(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("scoring: {0}")]
    Scoring(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for this kind of failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Load { .. } | Error::Format { .. } | Error::Io(_) | Error::Json(_) => 3,
            Error::Contract(_) => 4,
            Error::Capacity(_) => 5,
            Error::Budget(_) => 6,
            Error::Scoring(_) => 7,
        }
    }

    pub(crate) fn format(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}

/// Returns a contract-violation error unless `cond` holds.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
