use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {actual:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("stale layer cache in {0}: backward called without a matching forward")]
    StaleCache(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate pulse: sampled {0} pulse has zero norm")]
    DegeneratePulse(String),

    #[error("degenerate response curve: endpoints {first} and {last} coincide")]
    DegenerateCurve { first: f64, last: f64 },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("ensemble member {member} failed: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint holds a {found} encoder, expected {expected}")]
    KindMismatch { expected: String, found: String },

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{count} ensemble member(s) failed; details in {manifest}")]
    PartialFailure { count: usize, manifest: PathBuf },

    #[error("malformed csv {path}: {msg}")]
    Csv { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse failure class, used by the CLI to pick an exit code.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorClass::Config,
            Error::Diverged { .. }
            | Error::Member { .. }
            | Error::DegenerateCurve { .. }
            | Error::PartialFailure { .. } => {
                ErrorClass::Training
            }
            Error::Io { .. } | Error::Csv { .. } | Error::Checkpoint(_) | Error::KindMismatch { .. } => {
                ErrorClass::Io
            }
            Error::Shape { .. } | Error::StaleCache(_) | Error::DegeneratePulse(_) => {
                ErrorClass::Internal
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Training,
    Io,
    Internal,
}

pub type Result<T> = std::result::Result<T, Error>;
