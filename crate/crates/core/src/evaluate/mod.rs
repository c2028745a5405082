//! Estimator dispatch, naive baselines, metrics, cross-validation and the
//! benchmark harnesses.

mod cv;
mod experiments;
mod report;

pub use cv::{fold_assignment, kfold_cv, CVPlan, CvMetric, CvPoint, CvResult};
pub use experiments::{
    calibrate_lambda_const, comparison_experiment, cv_fit, misspecification_experiment, scaling_experiment,
    theoretical_rate, ComparisonPlan, MisspecPlan, ScalingCell, ScalingPlan, Sweep,
};
pub use report::{ExperimentReport, RateFit, Record, Summary};

use serde::{Deserialize, Serialize};

use crate::data::PUDataset;
use crate::em::{em_fit_mn, em_fit_on, EMConfig};
use crate::error::{Error, Result};
use crate::models::{
    mn_naive_loss, mn_observed_loss, on_naive_loss, on_observed_loss, LossKind, ModelKind, ModelParams,
};
use crate::optimizer::{
    fit_mn_kind, fit_on_kind, lambda_max_mn, lambda_max_on, pgd_fit_mn, pgd_fit_on, FitResult, GroupStructure,
    SolverConfig,
};
use crate::params::{MultinomialParams, OrdinalParams};

/// Penalized fit that treats every unlabeled row as class 0.
pub fn naive_fit_mn(
    data: &PUDataset,
    gs: &GroupStructure,
    cfg: &SolverConfig,
    init: Option<&MultinomialParams>,
) -> Result<FitResult<MultinomialParams>> {
    fit_mn_kind(data, gs, cfg, init, LossKind::Naive)
}

pub fn naive_fit_on(
    data: &PUDataset,
    gs: &GroupStructure,
    cfg: &SolverConfig,
    init: Option<&OrdinalParams>,
) -> Result<FitResult<OrdinalParams>> {
    fit_on_kind(data, gs, cfg, init, LossKind::Naive)
}

/// Fraction of positions where the labels differ.
pub fn misclassification_rate(pred: &[usize], truth: &[usize]) -> Result<f64> {
    mean_of(pred, truth, |a, b| f64::from(u8::from(a != b)))
}

/// Mean squared difference of the labels read as ranks.
pub fn pred_mse(pred: &[usize], truth: &[usize]) -> Result<f64> {
    mean_of(pred, truth, |a, b| (a as f64 - b as f64).powi(2))
}

fn mean_of(pred: &[usize], truth: &[usize], f: impl Fn(usize, usize) -> f64) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: truth.len() });
    }
    if pred.is_empty() {
        return Err(Error::LengthMismatch { left: 0, right: 0 });
    }
    Ok(pred.iter().zip(truth).map(|(&a, &b)| f(a, b)).sum::<f64>() / pred.len() as f64)
}

/// Which solver and likelihood an estimator uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Proximal gradient descent on the observed PU likelihood.
    #[default]
    Pgd,
    /// Regularized EM on the same objective.
    Em,
    /// Standard penalized likelihood with unlabeled rows read as class 0.
    Naive,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Pgd => "pgd",
            Method::Em => "em",
            Method::Naive => "naive",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgd" => Ok(Method::Pgd),
            "em" => Ok(Method::Em),
            "naive" => Ok(Method::Naive),
            _ => Err(Error::InvalidConfig(format!("unknown solver `{s}`"))),
        }
    }
}

/// Default penalty groups: rows of the regression matrix for the
/// multinomial model, single coefficients for the ordinal model.
pub fn default_groups(model: ModelKind, p: usize, k: usize) -> GroupStructure {
    match model {
        ModelKind::Multinomial => GroupStructure::rows(p, k),
        ModelKind::Ordinal => GroupStructure::entrywise(p),
    }
}

/// `len` log-spaced values from `lambda_max` down to `lambda_max * ratio`.
pub fn lambda_grid(lambda_max: f64, len: usize, ratio: f64) -> Result<Vec<f64>> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) || len == 0 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidPlan(format!(
            "cannot build a grid from lambda_max={lambda_max}, len={len}, ratio={ratio}"
        )));
    }
    if len == 1 {
        return Ok(vec![lambda_max]);
    }
    let step = ratio.ln() / (len - 1) as f64;
    Ok((0..len).map(|i| lambda_max * (step * i as f64).exp()).collect())
}

/// A model, a method and solver settings; the penalty level is supplied
/// per fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub model: ModelKind,
    pub method: Method,
    /// `inner` drives PGD and naive fits; the outer fields only matter for EM.
    pub config: EMConfig,
}

impl Estimator {
    pub fn new(model: ModelKind, method: Method) -> Self {
        Self { model, method, config: EMConfig::default() }
    }

    pub fn groups(&self, data: &PUDataset) -> GroupStructure {
        default_groups(self.model, data.p(), data.k())
    }

    pub fn fit(
        &self,
        data: &PUDataset,
        gs: &GroupStructure,
        lambda: f64,
        init: Option<&ModelParams>,
    ) -> Result<FitResult<ModelParams>> {
        let mut em = self.config.clone();
        em.inner.lambda = lambda;
        let cfg = &em.inner;
        match self.model {
            ModelKind::Multinomial => {
                let init = match init {
                    Some(ModelParams::Multinomial(m)) => Some(m),
                    Some(_) => return Err(Error::InvalidConfig("ordinal start for a multinomial fit".into())),
                    None => None,
                };
                let fit = match self.method {
                    Method::Pgd => pgd_fit_mn(data, gs, cfg, init),
                    Method::Em => em_fit_mn(data, gs, &em, init),
                    Method::Naive => naive_fit_mn(data, gs, cfg, init),
                }?;
                Ok(fit.map(ModelParams::Multinomial))
            }
            ModelKind::Ordinal => {
                let init = match init {
                    Some(ModelParams::Ordinal(o)) => Some(o),
                    Some(_) => return Err(Error::InvalidConfig("multinomial start for an ordinal fit".into())),
                    None => None,
                };
                let fit = match self.method {
                    Method::Pgd => pgd_fit_on(data, gs, cfg, init),
                    Method::Em => em_fit_on(data, gs, &em, init),
                    Method::Naive => naive_fit_on(data, gs, cfg, init),
                }?;
                Ok(fit.map(ModelParams::Ordinal))
            }
        }
    }

    /// Smallest penalty at which the intercept-only start is stationary.
    pub fn lambda_max(&self, data: &PUDataset, gs: &GroupStructure) -> Result<f64> {
        let naive = self.method == Method::Naive;
        match self.model {
            ModelKind::Multinomial => lambda_max_mn(data, gs, naive),
            ModelKind::Ordinal => lambda_max_on(data, gs, naive),
        }
    }

    /// Unpenalized loss of `params` on `data` under this estimator's likelihood.
    pub fn loss(&self, params: &ModelParams, data: &PUDataset) -> Result<f64> {
        let naive = self.method == Method::Naive;
        match params {
            ModelParams::Multinomial(m) if naive => mn_naive_loss(m, data),
            ModelParams::Multinomial(m) => mn_observed_loss(m, data),
            ModelParams::Ordinal(o) if naive => on_naive_loss(o, data),
            ModelParams::Ordinal(o) => on_observed_loss(o, data),
        }
    }
}
