//! Penalized multinomial and ordinal regression from positive-unlabeled data.
//!
//! Both case-control and single-training-set observation schemes are
//! supported. Estimators minimize the observed-data negative log-likelihood
//! plus a weighted group-lasso penalty, by proximal gradient descent or by
//! a regularized EM algorithm.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod data;
pub mod em;
pub mod evaluate;
pub mod error;
pub mod math;
pub mod models;
pub mod optimizer;
pub mod params;
pub mod simulate;
pub mod theory;

pub use data::{PUDataset, Scenario};
pub use error::{Error, Result};
pub use math::{CaseControlRatios, SingleTrainingProbs};
pub use models::{ModelKind, ModelParams, PosteriorWeights};
pub use optimizer::{FitResult, GroupStructure, SolverConfig};
pub use params::{MultinomialParams, OrdinalParams};
