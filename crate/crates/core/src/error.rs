use thiserror::Error;

/// A value that violates a domain invariant was handed to the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InputError {
    #[error("box has non-finite coordinate or negative size: {0:?}")]
    InvalidBox([f64; 4]),
    #[error("detection score {0} is outside [0, 1]")]
    InvalidScore(f64),
    #[error("embedding is not unit norm (norm = {0})")]
    EmbeddingNotUnit(f64),
    #[error("embedding dimension {got} does not match stream dimension {expected}")]
    EmbeddingDimension { expected: usize, got: usize },
    #[error("camera motion transform is singular (det = {0})")]
    SingularTransform(f64),
    #[error("measurement must have positive width and height, got w={width} h={height}")]
    NonPositiveSize { width: f64, height: f64 },
    #[error("frame numbers start at 1, got {0}")]
    InvalidFrameNumber(u64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
