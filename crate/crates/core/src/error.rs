use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    /// A test needed a critical value the quantile table does not hold.
    #[error("quantile table has no entry for {0}")]
    MissingEntry(String),

    #[error("duplicate quantile request {0}")]
    DuplicateRequest(String),

    #[error("unsupported quantile table schema version {0}")]
    SchemaVersion(u64),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's configuration rather than by
    /// the environment (bad parameters, table coverage gaps).
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::MissingEntry(_) | Error::DuplicateRequest(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid_param(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
