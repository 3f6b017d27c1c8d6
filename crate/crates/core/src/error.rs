use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the evaluation pipeline.
///
/// Candidate failures (wrong output, crashes, timeouts) are never errors; they are
/// recorded as data in [`crate::sandbox::CaseOutcome`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {field}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A required host toolchain is missing or unusable.
    #[error("environment error: {0}")]
    Environment(String),

    /// The sandbox itself failed (not the candidate).
    #[error("sandbox infrastructure error: {0}")]
    Infrastructure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported language tag `{0}`")]
    UnsupportedLanguage(String),

    #[error("syntax error in {what}: {detail}")]
    Syntax { what: String, detail: String },

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged: {0}")]
    NonFinite(String),

    #[error("operation unavailable: {0}")]
    Unavailable(String),

    #[error("remote endpoint error: {0}")]
    Remote(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
