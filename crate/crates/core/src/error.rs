use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// `row` is 1-based.
    #[error("zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// `index` is 1-based.
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("iterate became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("worker {index} failed: {message}")]
    Worker { index: usize, message: String },

    #[error("{context}: {source}")]
    Transport {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("timed out after {secs:.1} s waiting for {what}")]
    Timeout { what: String, secs: f64 },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("key mismatch: {0}")]
    KeyMismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn transport(context: impl Into<String>, source: io::Error) -> Self {
        Error::Transport {
            context: context.into(),
            source,
        }
    }

    /// True for failures caused by the environment (files, sockets, peers)
    /// rather than by the caller's arguments or the numerics.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Transport { .. }
                | Error::Protocol(_)
                | Error::Timeout { .. }
                | Error::Worker { .. }
        )
    }
}
