use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class; the CLI maps these onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Judge,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("budget exceeds labeled pool: {budget} > {available}")]
    Budget { budget: usize, available: usize },

    #[error("unlabeled question `{0}`: no correctness annotations")]
    Unlabeled(String),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("judge error for question `{id}`: {message}")]
    Judge { id: String, message: String },

    #[error("judge endpoint unreachable after retries ({completed} annotations completed, cache preserved): {message}")]
    Unreachable { completed: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Judge { .. } | Error::Unreachable { .. } => ErrorClass::Judge,
            Error::Config(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
