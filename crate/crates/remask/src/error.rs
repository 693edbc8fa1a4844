//! Error types shared across the detection engine.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains no words")]
    EmptyInput,

    #[error("expected {expected} importance scores, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("keyword selection is empty; nothing to mask")]
    EmptySelection,

    #[error("mask-fill backend returned no candidates for word position {position}")]
    ShortBeam { position: usize },

    #[error("reconstruction set was built from a different source text")]
    MismatchedReconstruction,

    #[error("posterior analysis requires a full one-by-one masking plan")]
    RequiresFullPlan,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("gradient-guided non-keyword set is empty for example {example}")]
    EmptyGradientSet { example: usize },

    #[error("victim backend does not expose gradients")]
    GradientUnavailable,

    #[error("corpus contains a single class; training needs at least two")]
    SingleClassCorpus,

    #[error("detector threshold is not calibrated")]
    UncalibratedDetector,

    #[error("feature vector length {got} does not match expected dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("calibration needs at least one example of each label")]
    MissingLabel,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Failures raised by model backends, local or remote.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request to {endpoint} timed out")]
    Timeout { endpoint: String },

    #[error("{endpoint} returned a malformed payload: {reason}")]
    SchemaViolation { endpoint: String, reason: String },

    #[error("{endpoint} returned HTTP {status}: {message}")]
    HttpStatus {
        endpoint: String,
        status: u16,
        message: String,
    },

    #[error("transport error for {endpoint}: {reason}")]
    Transport { endpoint: String, reason: String },

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
