use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Lengths or arities that do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    #[error("index error: {0}")]
    Index(String),

    /// Input that cannot be normalized or ranked (zero vectors, constant sequences).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Guards on qubit counts, circuit capacity and combinatorial searches.
    #[error("resource error: {0}")]
    Resource(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    /// Process exit code for this error: 1 validation, 2 I/O, 3 resource/capacity.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Resource(_) => 3,
            Error::Shape(_) | Error::Index(_) | Error::Degenerate(_) | Error::Validation(_) | Error::Format { .. } => 1,
        }
    }
}
