//! Group-lasso penalty, its proximal map, and proximal gradient descent
//! with backtracking for both models.

mod groups;
mod init;
mod pgd;

pub use groups::{group_norm, prox_group, GroupStructure};
pub use init::{intercept_only_init_mn, intercept_only_init_on};
pub(crate) use init::{mn_intercept_start, on_intercept_start};
pub(crate) use pgd::{pgd, stationarity, Composite};

use serde::{Deserialize, Serialize};

use crate::data::PUDataset;
use crate::error::{Error, Result};
use crate::models::{LossKind, MultinomialObjective, OrdinalObjective};
use crate::params::{MultinomialParams, OrdinalParams};

/// A differentiable function of a flat parameter vector.
///
/// `value` may return `+inf` outside the domain; solvers treat that as a
/// rejected trial point.
pub trait SmoothObjective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Writes the gradient into `grad` and returns the value.
    fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearch {
    pub initial_step: f64,
    pub shrink: f64,
    pub max_halvings: usize,
    /// Propose each trial step from the secant (Barzilai-Borwein) estimate
    /// of the local curvature instead of doubling the last accepted step.
    /// Acceptance still requires sufficient decrease, so descent is kept.
    pub spectral: bool,
    /// Largest trial step ever proposed.
    pub max_step: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            max_halvings: 60,
            spectral: true,
            max_step: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Penalty level.
    pub lambda: f64,
    pub max_iter: usize,
    /// Relative objective change treated as no progress.
    pub tol: f64,
    /// Consecutive no-progress iterations required to stop.
    pub patience: usize,
    pub line_search: LineSearch,
    /// Lower bound on the ordinal cut-point increments.
    pub offset_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            max_iter: 5000,
            tol: 1e-9,
            patience: 3,
            line_search: LineSearch::default(),
            offset_floor: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        let bad = if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            Some("lambda must be finite and nonnegative")
        } else if self.max_iter == 0 {
            Some("max_iter must be positive")
        } else if !(self.tol > 0.0) {
            Some("tol must be positive")
        } else if self.patience == 0 {
            Some("patience must be positive")
        } else if !(ls.initial_step > 0.0 && ls.initial_step.is_finite()) {
            Some("initial_step must be positive")
        } else if !(ls.max_step >= ls.initial_step) {
            Some("max_step must be at least initial_step")
        } else if !(ls.shrink > 0.0 && ls.shrink < 1.0) {
            Some("shrink must lie in (0, 1)")
        } else if !(self.offset_floor > 0.0) {
            Some("offset_floor must be positive")
        } else {
            None
        };
        match bad {
            Some(msg) => Err(Error::InvalidConfig(msg.into())),
            None => Ok(()),
        }
    }
}

/// Output of a solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<P> {
    pub params: P,
    /// Penalized objective at the start and after every accepted iterate.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the proximal-gradient residual at the returned point.
    pub stationarity_gap: f64,
    pub lambda: f64,
}

impl<P> FitResult<P> {
    /// Final penalized objective.
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts with the initial value")
    }

    pub fn map<Q>(self, f: impl FnOnce(P) -> Q) -> FitResult<Q> {
        FitResult {
            params: f(self.params),
            objective_trace: self.objective_trace,
            iterations: self.iterations,
            converged: self.converged,
            stationarity_gap: self.stationarity_gap,
            lambda: self.lambda,
        }
    }
}

fn check_groups(gs: &GroupStructure, dim: usize) -> Result<()> {
    if gs.dim() != dim {
        return Err(Error::InvalidGroups(format!(
            "groups cover {} coordinates but the model has {dim} penalized coordinates",
            gs.dim()
        )));
    }
    Ok(())
}

pub(crate) fn fit_mn_kind(
    data: &PUDataset,
    gs: &GroupStructure,
    cfg: &SolverConfig,
    init: Option<&MultinomialParams>,
    kind: LossKind<'_>,
) -> Result<FitResult<MultinomialParams>> {
    cfg.validate()?;
    let (p, k) = (data.p(), data.k());
    check_groups(gs, p * k)?;
    let obj = MultinomialObjective::new(data, kind)?;
    let x0 = match init {
        Some(m) => {
            if m.p() != p || m.k() != k {
                return Err(Error::DimensionMismatch("initial parameters do not match the data".into()));
            }
            m.to_flat()
        }
        None => mn_intercept_start(&obj, p, k).to_flat(),
    };
    let comp = Composite {
        groups: gs,
        lambda: cfg.lambda,
        floor: None,
    };
    let raw = pgd(&obj, &comp, x0, cfg)?;
    Ok(raw.into_fit(cfg.lambda, |x| MultinomialParams::from_flat(&x, p, k).expect("layout")))
}

pub(crate) fn fit_on_kind(
    data: &PUDataset,
    gs: &GroupStructure,
    cfg: &SolverConfig,
    init: Option<&OrdinalParams>,
    kind: LossKind<'_>,
) -> Result<FitResult<OrdinalParams>> {
    cfg.validate()?;
    let (p, k) = (data.p(), data.k());
    check_groups(gs, p)?;
    let obj = OrdinalObjective::new(data, kind)?;
    let x0 = match init {
        Some(t) => {
            if t.p() != p || t.k() != k {
                return Err(Error::DimensionMismatch("initial parameters do not match the data".into()));
            }
            let mut x = t.as_slice().to_vec();
            for v in &mut x[p + 1..] {
                *v = v.max(cfg.offset_floor);
            }
            x
        }
        None => on_intercept_start(&obj, p, k, cfg.offset_floor).as_slice().to_vec(),
    };
    let comp = Composite {
        groups: gs,
        lambda: cfg.lambda,
        floor: Some((p + 1, p + k, cfg.offset_floor)),
    };
    let raw = pgd(&obj, &comp, x0, cfg)?;
    Ok(raw.into_fit(cfg.lambda, |x| OrdinalParams::from_flat_unchecked(&x, p)))
}

/// Penalized multinomial fit of the observed PU likelihood by proximal
/// gradient descent. Starts from the intercept-only fit unless `init` is given.
pub fn pgd_fit_mn(
    data: &PUDataset,
    gs: &GroupStructure,
    cfg: &SolverConfig,
    init: Option<&MultinomialParams>,
) -> Result<FitResult<MultinomialParams>> {
    fit_mn_kind(data, gs, cfg, init, LossKind::Observed)
}

/// Penalized ordinal fit of the observed PU likelihood. Cut-point
/// increments are kept at or above `cfg.offset_floor`.
pub fn pgd_fit_on(
    data: &PUDataset,
    gs: &GroupStructure,
    cfg: &SolverConfig,
    init: Option<&OrdinalParams>,
) -> Result<FitResult<OrdinalParams>> {
    fit_on_kind(data, gs, cfg, init, LossKind::Observed)
}

/// Smallest penalty level at which the intercept-only fit is stationary.
pub fn lambda_max_mn(data: &PUDataset, gs: &GroupStructure, naive: bool) -> Result<f64> {
    let (p, k) = (data.p(), data.k());
    check_groups(gs, p * k)?;
    let kind = if naive { LossKind::Naive } else { LossKind::Observed };
    let obj = MultinomialObjective::new(data, kind)?;
    let x0 = mn_intercept_start(&obj, p, k).to_flat();
    let mut g = vec![0.0; x0.len()];
    obj.value_and_grad(&x0, &mut g);
    gs.dual_norm(&g)
}

pub fn lambda_max_on(data: &PUDataset, gs: &GroupStructure, naive: bool) -> Result<f64> {
    let (p, k) = (data.p(), data.k());
    check_groups(gs, p)?;
    let kind = if naive { LossKind::Naive } else { LossKind::Observed };
    let obj = OrdinalObjective::new(data, kind)?;
    let x0 = on_intercept_start(&obj, p, k, 1e-8);
    let mut g = vec![0.0; p + k];
    obj.value_and_grad(x0.as_slice(), &mut g);
    gs.dual_norm(&g)
}
