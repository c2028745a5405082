//! Regularized EM for both models and both observation schemes.
//!
//! The E-step replaces the hidden class indicators of unlabeled rows by
//! their posterior probabilities; the M-step runs warm-started proximal
//! gradient descent on the penalized complete-data surrogate. Because the
//! inner solver never increases the surrogate, the penalized observed
//! objective never increases across outer iterations.

use serde::{Deserialize, Serialize};

use crate::data::PUDataset;
use crate::error::{Error, Result};
use crate::models::{
    mn_posterior, on_posterior, LossKind, MultinomialObjective, OrdinalObjective, PosteriorWeights,
};
use crate::optimizer::{
    fit_mn_kind, fit_on_kind, mn_intercept_start, on_intercept_start, stationarity, Composite,
    FitResult, GroupStructure, SmoothObjective, SolverConfig,
};
use crate::params::{MultinomialParams, OrdinalParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EMConfig {
    pub outer_max_iter: usize,
    /// Relative change of the penalized observed objective that stops EM.
    pub outer_tol: f64,
    /// Settings of the M-step solver; its `lambda` is the penalty level.
    pub inner: SolverConfig,
}

impl Default for EMConfig {
    fn default() -> Self {
        Self {
            outer_max_iter: 200,
            outer_tol: 1e-8,
            inner: SolverConfig::default(),
        }
    }
}

impl EMConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            inner: SolverConfig::with_lambda(lambda),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.outer_max_iter == 0 || !(self.outer_tol > 0.0) {
            return Err(Error::InvalidConfig("EM needs positive outer_max_iter and outer_tol".into()));
        }
        self.inner.validate()
    }
}

struct Outer {
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn run_outer<P: Clone>(
    cfg: &EMConfig,
    start: P,
    observed: impl Fn(&P) -> f64,
    mut step: impl FnMut(&P) -> Result<P>,
) -> Result<(P, Outer)> {
    let mut params = start;
    let mut f = observed(&params);
    if !f.is_finite() {
        return Err(Error::NonFinite(0));
    }
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.outer_max_iter {
        iterations += 1;
        let next = step(&params)?;
        let f_next = observed(&next);
        if !f_next.is_finite() {
            return Err(Error::NonFinite(iterations));
        }
        let rel = (f - f_next) / f.abs().max(1.0);
        params = next;
        f = f_next;
        trace.push(f);
        if rel < cfg.outer_tol {
            converged = true;
            break;
        }
    }
    Ok((params, Outer { trace, iterations, converged }))
}

/// EM fit of the penalized multinomial PU model. The scenario of `data`
/// selects the case-control or single-training variant.
pub fn em_fit_mn(
    data: &PUDataset,
    gs: &GroupStructure,
    cfg: &EMConfig,
    init: Option<&MultinomialParams>,
) -> Result<FitResult<MultinomialParams>> {
    cfg.validate()?;
    let (p, k) = (data.p(), data.k());
    if gs.dim() != p * k {
        return Err(Error::InvalidGroups("groups do not match the regression matrix".into()));
    }
    let obj = MultinomialObjective::new(data, LossKind::Observed)?;
    let comp = Composite { groups: gs, lambda: cfg.inner.lambda, floor: None };
    let start = match init {
        Some(m) => m.clone(),
        None => mn_intercept_start(&obj, p, k),
    };
    let observed = |m: &MultinomialParams| {
        let x = m.to_flat();
        obj.value(&x) + comp.penalty(&x)
    };
    let (params, outer) = run_outer(cfg, start, observed, |m| {
        let w: PosteriorWeights = mn_posterior(m, data)?;
        Ok(fit_mn_kind(data, gs, &cfg.inner, Some(m), LossKind::Full(&w))?.params)
    })?;
    let gap = stationarity(&obj, &comp, &params.to_flat(), &cfg.inner.line_search);
    Ok(FitResult {
        params,
        objective_trace: outer.trace,
        iterations: outer.iterations,
        converged: outer.converged,
        stationarity_gap: gap,
        lambda: cfg.inner.lambda,
    })
}

/// EM fit of the penalized ordinal PU model.
pub fn em_fit_on(
    data: &PUDataset,
    gs: &GroupStructure,
    cfg: &EMConfig,
    init: Option<&OrdinalParams>,
) -> Result<FitResult<OrdinalParams>> {
    cfg.validate()?;
    let (p, k) = (data.p(), data.k());
    if gs.dim() != p {
        return Err(Error::InvalidGroups("groups do not match the regression coefficients".into()));
    }
    let obj = OrdinalObjective::new(data, LossKind::Observed)?;
    let floor = cfg.inner.offset_floor;
    let comp = Composite { groups: gs, lambda: cfg.inner.lambda, floor: Some((p + 1, p + k, floor)) };
    let start = match init {
        Some(t) => {
            let mut x = t.as_slice().to_vec();
            for v in &mut x[p + 1..] {
                *v = v.max(floor);
            }
            OrdinalParams::from_flat_unchecked(&x, p)
        }
        None => on_intercept_start(&obj, p, k, floor),
    };
    let observed = |t: &OrdinalParams| obj.value(t.as_slice()) + comp.penalty(t.as_slice());
    let (params, outer) = run_outer(cfg, start, observed, |t| {
        let w: PosteriorWeights = on_posterior(t, data)?;
        Ok(fit_on_kind(data, gs, &cfg.inner, Some(t), LossKind::Full(&w))?.params)
    })?;
    let gap = stationarity(&obj, &comp, params.as_slice(), &cfg.inner.line_search);
    Ok(FitResult {
        params,
        objective_trace: outer.trace,
        iterations: outer.iterations,
        converged: outer.converged,
        stationarity_gap: gap,
        lambda: cfg.inner.lambda,
    })
}
