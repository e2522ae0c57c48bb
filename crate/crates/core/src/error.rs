use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    FactorizationFailed(String),

    #[error("operation not supported for this base process: {0}")]
    UnsupportedBase(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("reference sample set is empty")]
    EmptyReference,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed checkpoint: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
