use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the analytics library.
///
/// Variants split roughly into input problems (bad files, missing columns,
/// malformed zone data), numerical preconditions that the data fails to meet,
/// and acquisition failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("required column `{column}` is absent from {context}")]
    MissingColumn { column: String, context: String },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("design matrix is rank deficient ({rank} of {columns} columns); collinear terms: {terms:?}")]
    RankDeficient {
        rank: usize,
        columns: usize,
        terms: Vec<String>,
    },

    #[error("reference series has zero variance; nRMSE undefined")]
    ZeroVariance,

    #[error("sensor `{0}` has no flag cutoff")]
    MissingCutoff(String),

    #[error("credential error: {0}")]
    Credential(String),

    #[error("http error: {0}")]
    Http(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
