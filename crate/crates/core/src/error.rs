use std::path::PathBuf;

use thiserror::Error;

use crate::trace::Trace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("graph has {n} nodes, above the enumeration guard of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("parameter violation: {0}")]
    Params(String),

    #[error("adversary model violation: {0}")]
    Model(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("non-finite value for agent {} at step {step}", .agent + 1)]
    /// `agent` is 0-indexed; messages print it 1-indexed.
    NonFinite { agent: usize, step: usize },

    /// The run left the divergence guard; the partial trace is kept for inspection.
    #[error("run diverged at step {step} (agent {}, |x| = {magnitude:e})", .agent + 1)]
    Diverged {
        step: usize,
        agent: usize,
        magnitude: f64,
        partial: Box<Trace>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::Diverged { .. } => 3,
            Error::Io { .. } => 1,
            _ => 2,
        }
    }
}
