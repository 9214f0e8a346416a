use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate covariance: temporal variance {0:e} is below the guard")]
    DegenerateCovariance(f64),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),

    #[error("non-finite attribute on Gaussian {index}: {field}")]
    NonFinite { index: usize, field: &'static str },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("corrupt checkpoint at byte {offset}: {what}")]
    CorruptCheckpoint { offset: u64, what: String },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("parse error at byte {offset}: {what}")]
    Parse { offset: u64, what: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
