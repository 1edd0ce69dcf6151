//! Statistical tests and models for the analysis.

mod exact;
mod hier;
mod logistic;
mod ordinal;
mod posterior;
pub mod special;
mod synthetic;
mod ttest;

pub use exact::*;
pub use hier::*;
pub use logistic::*;
pub use ordinal::*;
pub use posterior::*;
pub use synthetic::*;
pub use ttest::*;

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("table too large for exact enumeration: {0}")]
    TooLarge(String),
    #[error("complete or quasi-complete separation: coefficient {index} diverges")]
    Separation { index: usize },
    #[error("design matrix is not full rank")]
    Singular,
    #[error("Newton iterations did not converge (gradient norm {grad_norm:e})")]
    NoConvergence { grad_norm: f64 },
    #[error("not enough samples: need at least {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("unknown category {0}")]
    UnknownCategory(String),
    #[error("negative variance component {0}")]
    NegativeVariance(f64),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
}
