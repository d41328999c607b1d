use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("non-numeric cell in {path} at row {row}, column {col}: {cell:?}")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        cell: String,
    },

    /// A structural invariant of an input does not hold.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("linear system for view {view} is singular: {detail}")]
    Singular { view: usize, detail: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("graph over-connected: {0}")]
    OverConnected(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures raised by the numerical core rather than by bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::Numeric(_) | Error::OverConnected(_)
        )
    }
}
