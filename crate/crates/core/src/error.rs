use std::path::PathBuf;

/// Crate-wide error type.
#[derive(thiserror::Error, Debug)]
pub enum DerevError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("work directory is locked by another process ({0})")]
    WorkDirLocked(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, DerevError>;

impl DerevError {
    /// Process exit code for the CLI: distinct families for config, data and
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            DerevError::Config(_) => 2,
            DerevError::InvalidInput(_)
            | DerevError::ShapeMismatch(_)
            | DerevError::SampleRateMismatch { .. }
            | DerevError::MissingFile(_)
            | DerevError::Io(_)
            | DerevError::Wav(_)
            | DerevError::Checkpoint(_)
            | DerevError::WorkDirLocked(_) => 3,
            DerevError::Metric(_) => 3,
            DerevError::Divergence(_) => 4,
        }
    }
}
