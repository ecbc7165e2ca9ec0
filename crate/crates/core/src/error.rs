use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument or call order was violated.
    #[error("usage error: {0}")]
    Usage(String),
    /// An enumeration would exceed the configured size limit.
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("config error: {0}")]
    Config(String),
    /// A checkpoint, episode, or embedding file could not be decoded.
    #[error("load error: {0}")]
    Load(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
