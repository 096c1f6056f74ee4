use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("series `{series}` has length {length}, needs more than {required} (horizon + season_length)")]
    SeriesTooShort {
        series: String,
        length: usize,
        required: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("model `{0}` has not been fitted")]
    UnfittedModel(String),

    #[error("unknown property `{0}`")]
    UnknownProperty(String),

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("undefined {metric}: {reason}")]
    UndefinedMetric { metric: &'static str, reason: String },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("property `{property}` unavailable for dataset `{dataset}`")]
    PropertyUnavailable { dataset: String, property: String },

    #[error("invalid weights: `{field}` {reason}")]
    InvalidWeights { field: String, reason: String },

    #[error("invalid profile: `{field}` {reason}")]
    InvalidProfile { field: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{groups} distinct groups cannot fill {folds} folds")]
    InsufficientGroups { groups: usize, folds: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("feature schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

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

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
