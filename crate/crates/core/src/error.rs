use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("unknown label(s): {}", format_unknown(.0))]
    UnknownLabels(Vec<(usize, String)>),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("record `{0}` has no label")]
    Unlabeled(String),

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("label `{0}` was not seen when the encoding was fitted")]
    UnseenLabel(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("class `{class}` has {count} sample(s); SMOTE needs at least 2")]
    TooFewSamples { class: String, count: usize },

    #[error("{0} does not produce calibrated probabilities")]
    Unsupported(&'static str),

    #[error("id sets differ: {0}")]
    IdMismatch(String),

    #[error("label sets differ between reports")]
    LabelSetMismatch,

    #[error("comment does not belong to source {0}")]
    SourceMismatch(String),

    #[error("authentication failed: {0}")]
    Auth(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("malformed response envelope: {0}")]
    MalformedResponse(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("glob: {0}")]
    Glob(#[from] globset::Error),
}

fn format_unknown(rows: &[(usize, String)]) -> String {
    rows.iter()
        .map(|(row, value)| format!("row {row}: `{value}`"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
