use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("unreadable checkpoint {}: {source}", path.display())]
    Checkpoint { path: PathBuf, source: asbs::Error },

    #[error("non-finite values during training ({reason}); last good checkpoint: {}", last_good.as_ref().map_or("none".to_string(), |p| p.display().to_string()))]
    NonFinite { reason: String, last_good: Option<PathBuf> },

    #[error("metric precondition failed: {0}")]
    Metric(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed sample file {}: {msg}", path.display())]
    SampleFile { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] asbs::Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Checkpoint { .. } => 2,
            CliError::NonFinite { .. } => 3,
            CliError::Metric(_) | CliError::MissingFile(_) | CliError::SampleFile { .. } => 4,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                asbs::Error::NonFinite(_) => 3,
                asbs::Error::InvalidConfig(_) | asbs::Error::UnsupportedBase(_) | asbs::Error::FactorizationFailed(_) => 2,
                asbs::Error::SizeMismatch(_) | asbs::Error::EmptyReference => 4,
                asbs::Error::Format(_) => 2,
                asbs::Error::Io(_) | asbs::Error::Json(_) => 1,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
