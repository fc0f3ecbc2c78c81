use thiserror::Error;

/// Error type shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("domain error: {0}")]
    Domain(String),
    /// The request is well formed but exceeds a hard size cap.
    #[error("capacity error: {0}")]
    Capacity(String),
    /// A deterministic construction could not be completed.
    #[error("construction error: {0}")]
    Construction(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }
    pub fn construction(msg: impl Into<String>) -> Self {
        Error::Construction(msg.into())
    }
}
