use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("basis index {index} out of range for dimension {dim}")]
    InvalidIndex { index: usize, dim: usize },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("invalid amplitude: {0}")]
    InvalidAmplitude(String),
    #[error("model integrity violated: {0}")]
    ModelIntegrity(String),
    #[error("partition mismatch: {0}")]
    Partition(String),
    #[error("domain mismatch: {0}")]
    Domain(String),
    #[error("degenerate rate: {0}")]
    DegenerateRate(String),
    #[error("state not normalized: {0}")]
    Normalization(String),
    #[error("invalid approximant: {0}")]
    InvalidApproximant(String),
    #[error("structural model error: {0}")]
    Structural(String),
    #[error("insufficient truncation: {0}")]
    InsufficientTruncation(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
