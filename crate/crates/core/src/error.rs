use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value is out of range, or the world could not be built from it.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A caller broke an operation's contract (wrong length, bad index, mismatched shapes).
    #[error("contract violation: {0}")]
    Contract(String),
    /// The replay buffer does not yet hold enough transitions for the requested minibatch.
    #[error("replay buffer not ready: holds {have}, need {need}")]
    NotReady { have: usize, need: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
