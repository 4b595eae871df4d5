use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected:?}, got {actual:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: truncated file, expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("missing artifact {path} produced by stage `{stage}`")]
    MissingArtifact { stage: String, path: PathBuf },

    #[error("digest mismatch for {path} (stage `{stage}`): manifest has {expected}, file has {actual}")]
    DigestMismatch {
        stage: String,
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("output directory {0} is locked by another pipeline run")]
    Locked(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }

    pub(crate) fn shape(op: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape { op, expected: expected.to_vec(), actual: actual.to_vec() }
    }

    /// Short stable identifier used in the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::InvalidInput(_) => "invalid-input",
            Error::Truncated { .. } => "truncated",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::MissingArtifact { .. } => "missing-artifact",
            Error::DigestMismatch { .. } => "digest-mismatch",
            Error::Locked(_) => "locked",
            Error::Io { .. } => "io",
        }
    }
}
