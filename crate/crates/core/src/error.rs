use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("explicit operator needs {required} bytes, budget is {budget} bytes; build it in lazy mode instead")]
    ResourceLimit { required: u128, budget: u128 },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("solver diverged at iteration {iteration}: residual {residual:e}")]
    Diverged { iteration: usize, residual: f64 },

    #[error("denoiser failed: {0}")]
    Denoiser(String),

    #[error("results table: {0}")]
    Table(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
