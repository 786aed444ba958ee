use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{what} {id} references unknown {target} {target_id}")]
    DanglingReference {
        what: &'static str,
        id: u64,
        target: &'static str,
        target_id: u64,
    },

    #[error("duplicate {what} id {id}")]
    DuplicateId { what: &'static str, id: u64 },

    #[error("degenerate box in {what} {id}: {reason}")]
    DegenerateBox {
        what: &'static str,
        id: u64,
        reason: String,
    },

    #[error("score {score} of prediction #{index} is outside [0, 1]")]
    InvalidScore { index: usize, score: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid noise spec: {0}")]
    InvalidSpec(String),

    #[error("evaluation requires injected noise: {0}")]
    NoNoise(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag used as the prefix of CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::DanglingReference { .. } => "dangling-reference",
            Error::DuplicateId { .. } => "duplicate-id",
            Error::DegenerateBox { .. } => "degenerate-box",
            Error::InvalidScore { .. } => "invalid-score",
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidSpec(_) => "invalid-spec",
            Error::NoNoise(_) => "no-noise",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
