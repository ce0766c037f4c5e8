use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error("unknown object `{0}`")]
    UnknownObject(String),

    #[error("unknown material `{0}`")]
    UnknownMaterial(String),

    #[error("object `{0}` is height-locked; z offset must be 0")]
    HeightLocked(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in path {key}: {what}")]
    NonFinite { key: String, what: String },

    #[error("optimizer diverged: loss {loss:e} exceeds 10x initial {initial:e}")]
    Diverged { loss: f64, initial: f64 },

    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
