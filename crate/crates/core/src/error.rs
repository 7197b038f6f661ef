use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation and training stack.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range. `field` is the dotted path of the
    /// offending key, e.g. `scenario.threat.safe_distance`.
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    /// A caller broke an operation's precondition (wrong length, bad index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("bodyguard controller failed at step {step}: {message}")]
    Controller { step: usize, message: String },

    #[error("training diverged at episode {episode}: {message}")]
    Diverged { episode: usize, message: String },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("scenario digest mismatch: file has {found}, expected {expected}")]
    DigestMismatch { found: String, expected: String },

    #[error("corrupt {what}: {message}")]
    Corrupt { what: &'static str, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
