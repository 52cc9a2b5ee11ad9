use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum HaloError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unknown code `{0}`")]
    UnknownCode(String),
    #[error("unknown continuous variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid bucket table for `{variable}`: {reason}")]
    InvalidBuckets { variable: String, reason: String },
    #[error("code `{0}` is not a bucket code")]
    NotABucket(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("loss mask selects no elements")]
    EmptyMask,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("tractability bound exceeded: {0}")]
    Tractability(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("vocabulary hash mismatch: checkpoint expects {expected}, vocabulary is {found}")]
    HashMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HaloError {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, HaloError::NonFinite(_) | HaloError::EmptyMask)
    }
}

pub type Result<T> = std::result::Result<T, HaloError>;
