use crate::state::Shape;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: Shape, right: Shape },

    #[error("data length {len} does not match shape {shape}")]
    LengthMismatch { len: usize, shape: Shape },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("step {step} out of range 0..={max}")]
    StepOutOfRange { step: usize, max: usize },

    #[error("step order violated: s = {s} > t = {t}")]
    StepOrder { s: usize, t: usize },

    #[error("marginal variance is zero at step {step}")]
    DegenerateVariance { step: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config line {line}, column {column}: {message}\n  | {snippet}")]
    ConfigParse {
        line: usize,
        column: usize,
        snippet: String,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("noise variance {sigma_sq:e} outside the reachable range [0, {lambda_sq:e})")]
    NoiseOutOfRange { sigma_sq: f64, lambda_sq: f64 },

    #[error("trajectory aborted at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("training diverged at iteration {iteration}")]
    TrainingDiverged { iteration: usize },

    #[error("gradient contains non-finite entries")]
    NonFiniteGradient,

    #[error("forward cache missing or built for a different architecture")]
    MissingCache,

    #[error("mask {0} lies outside the state bounds")]
    MaskOutOfBounds(String),

    #[error("state {shape} is smaller than the {window}-wide window")]
    TooSmall { shape: Shape, window: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
