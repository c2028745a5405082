use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid case-control ratios: {0}")]
    InvalidRatios(String),
    #[error("invalid labeling probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("label {label} at row {row} is outside 0..={k}")]
    LabelOutOfRange { row: usize, label: usize, k: usize },
    #[error("cut-points are not strictly increasing at position {0}")]
    NotIncreasing(usize),
    #[error("non-positive ordinal class probability at class {class}")]
    NonPositiveProbability { class: usize },
    #[error("objective became non-finite at iteration {0}")]
    NonFinite(usize),
    #[error("invalid group structure: {0}")]
    InvalidGroups(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid cross-validation plan: {0}")]
    InvalidPlan(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("rejection sampling stalled for class {class}: prevalence {prevalence:.3e}")]
    RejectionStall { class: usize, prevalence: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}
