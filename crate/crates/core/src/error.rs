use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read database {path}: {reason}")]
    UnreadableDatabase { path: PathBuf, reason: String },

    #[error("dialect {0} is not supported for this operation")]
    UnsupportedDialect(String),

    #[error("subset references unknown column {0}")]
    DanglingSubset(String),

    #[error("no backend bound for role `{0}`")]
    UnboundRole(String),

    #[error("provider failed after {attempts} attempts: {reason}")]
    ProviderExhausted { attempts: u32, reason: String },

    #[error("mock script exhausted for role `{0}`")]
    MockExhausted(String),

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("backend failure: {0}")]
    BackendFailure(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("no SQL statement found in model response")]
    ExtractionFailure,

    #[error("cluster set is empty")]
    EmptyClusterSet,

    #[error("no applicable mutation for `{0}`")]
    NoApplicableMutation(String),

    #[error("gold SQL failed for question {question_id}: {reason}")]
    GoldExecutionFailure { question_id: i64, reason: String },

    #[error("no correct candidate for question {0}")]
    NoCorrectCandidate(i64),

    #[error("malformed dataset {path}: {reason}")]
    MalformedDataset { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn unreadable(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::UnreadableDatabase {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
