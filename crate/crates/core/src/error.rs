use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solvers, loaders and generators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("InvalidMatrix: {0}")]
    InvalidMatrix(String),

    #[error("InvalidRank: k = {k} is outside 1..={dim}")]
    InvalidRank { k: usize, dim: usize },

    #[error("ShapeError: {0}")]
    Shape(String),

    #[error("IoError: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ParseError: {path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("DegenerateInstance: {0}")]
    DegenerateInstance(String),

    #[error("NumericalError: {0}")]
    Numerical(String),

    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Short name of the error kind, as printed by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMatrix(_) => "InvalidMatrix",
            Error::InvalidRank { .. } => "InvalidRank",
            Error::Shape(_) => "ShapeError",
            Error::Io { .. } => "IoError",
            Error::Parse { .. } => "ParseError",
            Error::DegenerateInstance(_) => "DegenerateInstance",
            Error::Numerical(_) => "NumericalError",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
