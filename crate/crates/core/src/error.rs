use std::path::PathBuf;

/// Errors produced by the simulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is out of its domain.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// A trace or config file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Input data violates a type invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// An operation was applied to state that does not permit it.
    #[error("logic error: {0}")]
    Logic(String),

    /// Power samples do not cover the integration window.
    #[error("integration error: {0}")]
    Integration(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
