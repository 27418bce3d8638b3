use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no records")]
    NoRecords,

    #[error("record `{id}`: vector length {got} does not match space `{space}` dimension {expected}")]
    DimensionMismatch {
        id: String,
        space: String,
        expected: usize,
        got: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("unknown class {0}")]
    UnknownClass(String),

    #[error("duplicate record id `{0}`")]
    DuplicateRecord(String),

    #[error("unknown space `{0}`")]
    UnknownSpace(String),

    #[error("record `{0}` is not finite-valued")]
    NonFinite(String),

    #[error("invalid registry: {0}")]
    Registry(String),

    #[error("class {class_id} has no labeled records in space `{space}`")]
    MissingClass { class_id: usize, space: String },

    #[error("split `{0}` has no labeled records")]
    EmptySplit(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("zero-norm query")]
    ZeroQuery,

    #[error("no relevant items")]
    NoRelevant,

    #[error("empty prediction list")]
    EmptyPredictions,

    #[error("prediction `{0}` has no complexity tag")]
    MissingComplexity(String),

    #[error("missing embedding for `{id}` in space `{space}`")]
    MissingEmbedding { id: String, space: String },

    #[error("join failed, ids without a counterpart: {0:?}")]
    Join(Vec<String>),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the CLI diagnostic line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::NoRecords => "no_records",
            Error::DimensionMismatch { .. } | Error::Shape { .. } => "dimension_mismatch",
            Error::UnknownClass(_) => "unknown_class",
            Error::DuplicateRecord(_) => "duplicate_record",
            Error::UnknownSpace(_) => "unknown_space",
            Error::NonFinite(_) => "non_finite",
            Error::Registry(_) => "registry",
            Error::MissingClass { .. } => "missing_class",
            Error::EmptySplit(_) => "empty_split",
            Error::EmptyBatch => "empty_batch",
            Error::ZeroQuery => "zero_query",
            Error::NoRelevant => "no_relevant",
            Error::EmptyPredictions => "empty_predictions",
            Error::MissingComplexity(_) => "missing_complexity",
            Error::MissingEmbedding { .. } => "missing_embedding",
            Error::Join(_) => "join",
            Error::Config(_) => "config",
            Error::Json(_) => "json",
        }
    }
}
