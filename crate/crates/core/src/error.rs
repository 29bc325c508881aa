use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChimeError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("incompatible: {0}")]
    Incompatible(String),

    #[error("missing ids: {0:?}")]
    MissingIds(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ChimeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ChimeError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, ChimeError>;

macro_rules! arg_err {
    ($($t:tt)*) => { $crate::error::ChimeError::Argument(format!($($t)*)) };
}
macro_rules! shape_err {
    ($($t:tt)*) => { $crate::error::ChimeError::Shape(format!($($t)*)) };
}
pub(crate) use arg_err;
pub(crate) use shape_err;
