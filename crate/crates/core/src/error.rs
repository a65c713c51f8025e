use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON that does not match the expected schema. `line`/`column` point into the source file.
    #[error("{what} parse error at line {line}, column {column}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid robot model: {0}")]
    InvalidModel(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("link index {index} out of range for a {n}-link chain")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("simulation diverged at tick {tick}")]
    Diverged { tick: u64 },

    #[error("trace schema mismatch: {0}")]
    TraceSchema(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(what: &'static str, err: &serde_json::Error) -> Self {
        Error::Parse {
            what,
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
