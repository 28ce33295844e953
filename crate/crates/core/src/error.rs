use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad class of an [`Error`], used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Caller supplied an invalid parameter.
    Usage,
    /// Input data is malformed, inconsistent or incomplete.
    Data,
    /// A numerical procedure failed.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error at byte offset {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension mismatch for key '{key}': expected {expected}, found {found}")]
    Dimension {
        key: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate key '{0}'")]
    DuplicateKey(String),
    #[error("key '{key}' not found in {side}")]
    Lookup { key: String, side: String },
    #[error("trial ({enroll}, {test}) has no target/nontarget label")]
    Label { enroll: String, test: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("covariance is not positive definite even after regularization: {0}")]
    Conditioning(String),
    #[error("training diverged at step {step}")]
    Training { step: usize },
    #[error("degenerate affinity graph: node {index} ({key}) has zero degree")]
    DegenerateGraph { index: usize, key: String },
    #[error("no scored reference speech; DER is undefined")]
    UndefinedDenominator,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) => ErrorKind::Usage,
            Error::Io { .. }
            | Error::Format { .. }
            | Error::Parse { .. }
            | Error::Dimension { .. }
            | Error::DuplicateKey(_)
            | Error::Lookup { .. }
            | Error::Label { .. }
            | Error::Data(_)
            | Error::UndefinedDenominator => ErrorKind::Data,
            Error::Domain(_)
            | Error::Numeric(_)
            | Error::Conditioning(_)
            | Error::Training { .. }
            | Error::DegenerateGraph { .. } => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
