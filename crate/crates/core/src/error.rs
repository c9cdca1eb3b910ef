use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("shape mismatch at layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },
    #[error("backward called without a recorded forward pass")]
    NoForward,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
