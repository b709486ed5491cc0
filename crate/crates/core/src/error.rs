use std::path::PathBuf;

/// Crate-wide error type. Variants map onto the CLI exit codes:
/// config/validation errors exit 2, numerical failures exit 3, I/O exits 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("NaN gradient in parameter '{param}' at step {step}")]
    NanGradient { param: String, step: u64 },

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error per the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::DimensionMismatch(_)
            | Error::IndexOutOfRange(_)
            | Error::Parse { .. } => 2,
            Error::NonFinite { .. } | Error::NanGradient { .. } | Error::GradCheck(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
