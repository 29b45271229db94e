//! Error type shared by the whole crate.
//!
//! Every variant carries enough context to be actionable (paths, row and
//! column positions, offending ids). [`Error::code`] returns a short stable
//! token for machine-parsable CLI error lines.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema mismatch: expected columns [{expected}], found [{found}]")]
    SchemaMismatch { expected: String, found: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("duplicate sample id {id:?}")]
    DuplicateSampleId { id: String },

    #[error("row {row}, column {column:?}: expected a number, found {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: score {score} outside the calibrated band [1.0, 8.0]")]
    ScoreOutOfRange { row: usize, score: f64 },

    #[error("line {line}: {message}")]
    ParseLine { line: usize, message: String },

    #[error("missing ids: {}", ids.join(", "))]
    MissingIds { ids: Vec<String> },

    #[error("audio error on {path}: {message}")]
    Audio { path: PathBuf, message: String },

    #[error("training failed: {0}")]
    Training(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("explanation failed: {0}")]
    Explain(String),

    #[error("pipeline stage {stage:?} failed: {source}")]
    Pipeline {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("output directory {path} is locked by another run (lock file {lock})")]
    OutputLocked { path: PathBuf, lock: PathBuf },
}

impl Error {
    /// Stable machine-parsable code for CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Json { .. } => "json",
            Error::InvalidInput(_) => "invalid-input",
            Error::SchemaMismatch { .. } => "schema-mismatch",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::DuplicateSampleId { .. } => "duplicate-id",
            Error::NonNumericCell { .. } => "non-numeric",
            Error::ScoreOutOfRange { .. } => "score-range",
            Error::ParseLine { .. } => "parse",
            Error::MissingIds { .. } => "missing-ids",
            Error::Audio { .. } => "audio",
            Error::Training(_) => "training",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::Explain(_) => "explain",
            Error::Pipeline { .. } => "pipeline",
            Error::OutputLocked { .. } => "output-locked",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
