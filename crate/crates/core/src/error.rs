use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called in a state that does not support it,
    /// e.g. backward without a cached forward.
    #[error("state error: {0}")]
    State(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// A checkpoint does not match the architecture it is loaded into.
    #[error("integrity error: tensor `{name}`: {reason}")]
    Integrity { name: String, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("cannot decode image `{id}`: {reason}")]
    Decode { id: String, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, value: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end:
    /// 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) | Error::Shape(_) | Error::State(_) => 1,
            Error::Integrity { .. }
            | Error::Format(_)
            | Error::Decode { .. }
            | Error::Dataset(_)
            | Error::Io { .. } => 2,
            Error::NonFinite { .. } => 3,
        }
    }
}
