use thiserror::Error;

use crate::state::Position;

/// Failure reported by a [`ModelBackend`](crate::backend::ModelBackend).
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}", match .position {
    Some(p) => format!("position {p}: {}", .message),
    None => .message.clone(),
})]
pub struct BackendError {
    pub position: Option<Position>,
    pub message: String,
}

impl BackendError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { position: None, message: message.into() }
    }

    pub fn at(position: Position, message: impl Into<String>) -> Self {
        Self { position: Some(position), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("backend fault: {0}")]
    Backend(#[from] BackendError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
