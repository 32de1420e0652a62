use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    /// A parameter is outside its admissible range. `key` names the offending
    /// configuration key.
    #[error("invalid parameter `{key}`: {msg}")]
    InvalidParameter { key: String, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class {0} has no training instances")]
    MissingClass(usize),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn param(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::InvalidInput(_) => "invalid_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::MissingClass(_) => "missing_class",
            Error::Empty(_) => "empty",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// The configuration key or file the error refers to, when known.
    pub fn key(&self) -> Option<String> {
        match self {
            Error::Io { path, .. } | Error::Parse { path, .. } => Some(path.display().to_string()),
            Error::InvalidParameter { key, .. } => Some(key.clone()),
            _ => None,
        }
    }
}
