//! Observed-data and complete-data losses, analytic gradients, posterior
//! label weights and prediction for the multinomial and ordinal models.
//!
//! Losses are averaged over rows. Complete-data surrogates drop the terms
//! that do not depend on the parameters, so they are only meaningful for
//! minimization; compare observed objectives when checking descent.

pub(crate) mod kernel;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{PUDataset, Scenario};
use crate::error::{Error, Result};
use crate::math::{grad_log_partition_into, ordinal_p, sigmoid};
use crate::optimizer::SmoothObjective;
use crate::params::{MultinomialParams, OrdinalParams};
use kernel::{eta_row, ordinal_row, OrdinalRule, RowLoss, Scratch};

/// Row `i` holds the posterior probabilities of the positive classes
/// `1..=K`; the deficit from one is the probability of class 0.
pub type PosteriorWeights = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Multinomial,
    Ordinal,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Multinomial => "multinomial",
            ModelKind::Ordinal => "ordinal",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" | "mn" => Ok(ModelKind::Multinomial),
            "ordinal" | "on" => Ok(ModelKind::Ordinal),
            _ => Err(Error::InvalidConfig(format!("unknown model `{s}`"))),
        }
    }
}

/// Which likelihood an objective represents.
#[derive(Debug, Clone, Copy)]
pub enum LossKind<'w> {
    /// The observed PU likelihood under the dataset's scenario.
    Observed,
    /// Treats every unlabeled row as class 0.
    Naive,
    /// The complete-data surrogate with the given posterior weights.
    Full(&'w PosteriorWeights),
}

/// Fitted or true parameters of either model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelParams {
    Multinomial(MultinomialParams),
    Ordinal(OrdinalParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Multinomial(_) => ModelKind::Multinomial,
            ModelParams::Ordinal(_) => ModelKind::Ordinal,
        }
    }

    pub fn p(&self) -> usize {
        match self {
            ModelParams::Multinomial(m) => m.p(),
            ModelParams::Ordinal(o) => o.p(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            ModelParams::Multinomial(m) => m.k(),
            ModelParams::Ordinal(o) => o.k(),
        }
    }

    pub fn predict_proba(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        match self {
            ModelParams::Multinomial(m) => mn_predict_proba(m, x),
            ModelParams::Ordinal(o) => on_predict_proba(o, x),
        }
    }

    /// Probability rows for every row of `x`, shape `n x (K + 1)`.
    pub fn predict_proba_matrix(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let k = self.k();
        let mut out = Array2::zeros((x.nrows(), k + 1));
        for (i, row) in x.rows().into_iter().enumerate() {
            let pr = self.predict_proba(row)?;
            out.row_mut(i).assign(&ArrayView1::from(&pr));
        }
        Ok(out)
    }

    pub fn predict_labels(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        x.rows()
            .into_iter()
            .map(|row| self.predict_proba(row).map(|p| predict_label(&p)))
            .collect()
    }

    /// Penalized coordinates in the flat layout used by the solvers.
    pub fn penalized(&self) -> Vec<f64> {
        match self {
            ModelParams::Multinomial(m) => m.theta.iter().copied().collect(),
            ModelParams::Ordinal(o) => o.beta().to_vec(),
        }
    }
}

fn check_dims(data: &PUDataset, p: usize, k: usize) -> Result<()> {
    if data.p() != p || data.k() != k {
        return Err(Error::DimensionMismatch(format!(
            "parameters are p={p}, K={k} but data has p={}, K={}",
            data.p(),
            data.k()
        )));
    }
    Ok(())
}

fn check_weights(data: &PUDataset, w: &PosteriorWeights) -> Result<()> {
    if w.dim() != (data.n(), data.k()) {
        return Err(Error::DimensionMismatch(format!(
            "weights are {:?} but data is {}x{}",
            w.dim(),
            data.n(),
            data.k()
        )));
    }
    Ok(())
}

enum Targets<'a> {
    Labels(&'a [usize]),
    Weights(&'a PosteriorWeights),
}

impl Targets<'_> {
    #[inline]
    fn fill(&self, i: usize, out: &mut [f64]) {
        match self {
            Targets::Labels(z) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                if z[i] > 0 {
                    out[z[i] - 1] = 1.0;
                }
            }
            Targets::Weights(w) => {
                for (o, v) in out.iter_mut().zip(w.row(i)) {
                    *o = *v;
                }
            }
        }
    }
}

fn scenario_log_c(s: &Scenario) -> Vec<f64> {
    match s {
        Scenario::CaseControl(r) => r.as_slice().iter().map(|k| k.ln_1p()).collect(),
        Scenario::SingleTraining(p) => vec![0.0; p.k()],
    }
}

/// Shift applied to the class log-odds before the E-step softmax.
fn scenario_posterior_shift(s: &Scenario) -> Vec<f64> {
    match s {
        Scenario::CaseControl(r) => vec![0.0; r.k()],
        Scenario::SingleTraining(p) => p.log_complement(),
    }
}

/// Smooth part of the multinomial objective over the flat parameter vector
/// (row-major regression matrix followed by offsets).
pub struct MultinomialObjective<'a> {
    data: &'a PUDataset,
    targets: Targets<'a>,
    rule: RowLoss,
    offset_shift: Vec<f64>,
}

impl<'a> MultinomialObjective<'a> {
    pub fn new(data: &'a PUDataset, kind: LossKind<'a>) -> Result<Self> {
        let k = data.k();
        let zero = vec![0.0; k];
        let (targets, rule, offset_shift) = match kind {
            LossKind::Observed => {
                let (log_kappa, shift) = match data.scenario() {
                    Scenario::CaseControl(r) => (r.log(), zero),
                    Scenario::SingleTraining(p) => (p.log_odds(), p.log_complement()),
                };
                (Targets::Labels(data.z()), RowLoss::Pu { log_kappa }, shift)
            }
            LossKind::Naive => (Targets::Labels(data.z()), RowLoss::Plain { log_c: zero.clone() }, zero),
            LossKind::Full(w) => {
                check_weights(data, w)?;
                (
                    Targets::Weights(w),
                    RowLoss::Plain { log_c: scenario_log_c(data.scenario()) },
                    zero,
                )
            }
        };
        Ok(Self { data, targets, rule, offset_shift })
    }

    fn eval(&self, flat: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (n, p, k) = (self.data.n(), self.data.p(), self.data.k());
        let theta = ArrayView2::from_shape((p, k), &flat[..p * k]).expect("flat layout");
        let b: Vec<f64> = flat[p * k..].iter().zip(&self.offset_shift).map(|(b, s)| b + s).collect();
        let lin = self.data.x().dot(&theta);
        let want_grad = grad.is_some();
        let mut g_lin = if want_grad { Array2::zeros((n, k)) } else { Array2::zeros((0, 0)) };
        let mut sc = Scratch::new(k);
        let mut target = vec![0.0; k];
        let mut total = 0.0;
        for i in 0..n {
            for ((e, l), bj) in sc.eta.iter_mut().zip(lin.row(i)).zip(&b) {
                *e = l + bj;
            }
            self.targets.fill(i, &mut target);
            total += eta_row(&self.rule, &target, &mut sc, want_grad);
            if want_grad {
                for (o, g) in g_lin.row_mut(i).iter_mut().zip(&sc.g) {
                    *o = *g;
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        if let Some(grad) = grad {
            let g_theta = self.data.x().t().dot(&g_lin);
            for (o, v) in grad[..p * k].iter_mut().zip(g_theta.iter()) {
                *o = v * inv_n;
            }
            let g_b = g_lin.sum_axis(ndarray::Axis(0));
            for (o, v) in grad[p * k..].iter_mut().zip(g_b.iter()) {
                *o = v * inv_n;
            }
        }
        total * inv_n
    }

    /// Loss of the offsets-only model as a function of `b`, which depends on
    /// the data only through label frequencies (or mean weights).
    pub(crate) fn intercept_problem(&self) -> InterceptProblem {
        let k = self.data.k();
        InterceptProblem {
            target: self.mean_target(),
            mode: InterceptMode::Multinomial { rule: self.rule.clone(), shift: self.offset_shift.clone() },
            k,
        }
    }

    fn mean_target(&self) -> Vec<f64> {
        mean_target(&self.targets, self.data.n(), self.data.k())
    }

    pub(crate) fn scenario(&self) -> &Scenario {
        self.data.scenario()
    }
}

fn mean_target(targets: &Targets<'_>, n: usize, k: usize) -> Vec<f64> {
    let mut acc = vec![0.0; k];
    let mut t = vec![0.0; k];
    for i in 0..n {
        targets.fill(i, &mut t);
        for (a, v) in acc.iter_mut().zip(&t) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / n as f64).collect()
}

impl SmoothObjective for MultinomialObjective<'_> {
    fn dim(&self) -> usize {
        self.data.p() * self.data.k() + self.data.k()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None)
    }

    fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, Some(grad))
    }
}

/// Smooth part of the ordinal objective over `theta`.
pub struct OrdinalObjective<'a> {
    data: &'a PUDataset,
    targets: Targets<'a>,
    rule: OrdinalRule,
}

impl<'a> OrdinalObjective<'a> {
    pub fn new(data: &'a PUDataset, kind: LossKind<'a>) -> Result<Self> {
        let k = data.k();
        let zero = vec![0.0; k];
        let (targets, rule) = match kind {
            LossKind::Observed => {
                let rule = match data.scenario() {
                    Scenario::CaseControl(r) => OrdinalRule::Direct { log_kappa: r.log() },
                    Scenario::SingleTraining(p) => OrdinalRule::ViaRatio {
                        shift: p.log_complement(),
                        rule: RowLoss::Pu { log_kappa: p.log_odds() },
                    },
                };
                (Targets::Labels(data.z()), rule)
            }
            LossKind::Naive => (
                Targets::Labels(data.z()),
                OrdinalRule::ViaRatio { shift: zero.clone(), rule: RowLoss::Plain { log_c: zero } },
            ),
            LossKind::Full(w) => {
                check_weights(data, w)?;
                (
                    Targets::Weights(w),
                    OrdinalRule::ViaRatio {
                        shift: zero,
                        rule: RowLoss::Plain { log_c: scenario_log_c(data.scenario()) },
                    },
                )
            }
        };
        Ok(Self { data, targets, rule })
    }

    fn eval(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (n, p, k) = (self.data.n(), self.data.p(), self.data.k());
        let offsets = &theta[p..];
        if offsets[1..].iter().any(|d| *d <= 0.0) {
            return f64::INFINITY;
        }
        let xb = self.data.x().dot(&ArrayView1::from(&theta[..p]));
        let want_grad = grad.is_some();
        let mut sc = Scratch::new(k);
        let mut target = vec![0.0; k];
        let mut g_first = if want_grad { vec![0.0; n] } else { Vec::new() };
        let mut g_off = vec![0.0; k];
        let mut total = 0.0;
        for i in 0..n {
            self.targets.fill(i, &mut target);
            total += ordinal_row(&self.rule, xb[i], offsets, &target, &mut sc, want_grad);
            if want_grad {
                g_first[i] = sc.u[0];
                g_off[0] -= sc.u[0];
                for j in 1..k {
                    g_off[j] -= sc.u[j];
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        if let Some(grad) = grad {
            let g_beta = self.data.x().t().dot(&ArrayView1::from(&g_first));
            for (o, v) in grad[..p].iter_mut().zip(g_beta.iter()) {
                *o = v * inv_n;
            }
            for (o, v) in grad[p..].iter_mut().zip(&g_off) {
                *o = v * inv_n;
            }
        }
        total * inv_n
    }

    pub(crate) fn scenario(&self) -> &Scenario {
        self.data.scenario()
    }

    pub(crate) fn intercept_problem(&self) -> InterceptProblem {
        InterceptProblem {
            target: mean_target(&self.targets, self.data.n(), self.data.k()),
            mode: InterceptMode::Ordinal { rule: self.rule.clone() },
            k: self.data.k(),
        }
    }
}

impl SmoothObjective for OrdinalObjective<'_> {
    fn dim(&self) -> usize {
        self.data.p() + self.data.k()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None)
    }

    fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, Some(grad))
    }
}

pub(crate) enum InterceptMode {
    Multinomial { rule: RowLoss, shift: Vec<f64> },
    Ordinal { rule: OrdinalRule },
}

/// The `K`-dimensional offsets-only problem. Every row shares the same
/// linear predictor, so the averaged loss is one row scored against the
/// mean target.
pub(crate) struct InterceptProblem {
    pub target: Vec<f64>,
    pub mode: InterceptMode,
    pub k: usize,
}

impl InterceptProblem {
    pub fn eval(&self, offsets: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let mut sc = Scratch::new(self.k);
        let want_grad = grad.is_some();
        match &self.mode {
            InterceptMode::Multinomial { rule, shift } => {
                for ((e, b), s) in sc.eta.iter_mut().zip(offsets).zip(shift) {
                    *e = b + s;
                }
                let v = eta_row(rule, &self.target, &mut sc, want_grad);
                if let Some(g) = grad {
                    g.copy_from_slice(&sc.g);
                }
                v
            }
            InterceptMode::Ordinal { rule } => {
                if offsets[1..].iter().any(|d| *d <= 0.0) {
                    return f64::INFINITY;
                }
                let v = ordinal_row(rule, 0.0, offsets, &self.target, &mut sc, want_grad);
                if let Some(g) = grad {
                    for (o, u) in g.iter_mut().zip(&sc.u) {
                        *o = -u;
                    }
                }
                v
            }
        }
    }
}

fn mn_objective<'a>(params: &MultinomialParams, data: &'a PUDataset, kind: LossKind<'a>) -> Result<MultinomialObjective<'a>> {
    check_dims(data, params.p(), params.k())?;
    MultinomialObjective::new(data, kind)
}

fn split_mn_grad(flat: Vec<f64>, p: usize, k: usize) -> (Array2<f64>, Array1<f64>) {
    let mp = MultinomialParams::from_flat(&flat, p, k).expect("gradient layout");
    (mp.theta, mp.b)
}

/// Averaged negative observed PU log-likelihood of the multinomial model.
pub fn mn_observed_loss(params: &MultinomialParams, data: &PUDataset) -> Result<f64> {
    Ok(mn_objective(params, data, LossKind::Observed)?.value(&params.to_flat()))
}

/// Gradient of [`mn_observed_loss`] with respect to the regression matrix and offsets.
pub fn mn_observed_grad(params: &MultinomialParams, data: &PUDataset) -> Result<(Array2<f64>, Array1<f64>)> {
    mn_grad(params, data, LossKind::Observed)
}

/// Complete-data surrogate `mean_i [A(u_i + log c) - w_i^T u_i]` with
/// `c = 1 + kappa` for case-control data and `c = 1` for single-training data.
pub fn mn_full_loss(params: &MultinomialParams, data: &PUDataset, weights: &PosteriorWeights) -> Result<f64> {
    Ok(mn_objective(params, data, LossKind::Full(weights))?.value(&params.to_flat()))
}

pub fn mn_full_grad(
    params: &MultinomialParams,
    data: &PUDataset,
    weights: &PosteriorWeights,
) -> Result<(Array2<f64>, Array1<f64>)> {
    mn_grad(params, data, LossKind::Full(weights))
}

/// Standard multinomial negative log-likelihood treating `z` as the class.
pub fn mn_naive_loss(params: &MultinomialParams, data: &PUDataset) -> Result<f64> {
    Ok(mn_objective(params, data, LossKind::Naive)?.value(&params.to_flat()))
}

pub fn mn_naive_grad(params: &MultinomialParams, data: &PUDataset) -> Result<(Array2<f64>, Array1<f64>)> {
    mn_grad(params, data, LossKind::Naive)
}

fn mn_grad(params: &MultinomialParams, data: &PUDataset, kind: LossKind<'_>) -> Result<(Array2<f64>, Array1<f64>)> {
    let obj = mn_objective(params, data, kind)?;
    let mut g = vec![0.0; obj.dim()];
    obj.value_and_grad(&params.to_flat(), &mut g);
    Ok(split_mn_grad(g, params.p(), params.k()))
}

fn on_objective<'a>(theta: &OrdinalParams, data: &'a PUDataset, kind: LossKind<'a>) -> Result<OrdinalObjective<'a>> {
    check_dims(data, theta.p(), theta.k())?;
    OrdinalObjective::new(data, kind)
}

fn on_value(theta: &OrdinalParams, data: &PUDataset, kind: LossKind<'_>) -> Result<f64> {
    let v = on_objective(theta, data, kind)?.value(theta.as_slice());
    finite_or_nonpositive(v)
}

fn on_grad(theta: &OrdinalParams, data: &PUDataset, kind: LossKind<'_>) -> Result<Array1<f64>> {
    let obj = on_objective(theta, data, kind)?;
    let mut g = vec![0.0; obj.dim()];
    finite_or_nonpositive(obj.value_and_grad(theta.as_slice(), &mut g))?;
    Ok(Array1::from(g))
}

fn finite_or_nonpositive(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonPositiveProbability { class: 0 })
    }
}

/// Averaged negative observed PU log-likelihood of the ordinal model.
pub fn on_observed_loss(theta: &OrdinalParams, data: &PUDataset) -> Result<f64> {
    on_value(theta, data, LossKind::Observed)
}

pub fn on_observed_grad(theta: &OrdinalParams, data: &PUDataset) -> Result<Array1<f64>> {
    on_grad(theta, data, LossKind::Observed)
}

/// Complete-data surrogate `mean_i [A(log r_i + log c) - w_i^T log r_i]`.
pub fn on_full_loss(theta: &OrdinalParams, data: &PUDataset, weights: &PosteriorWeights) -> Result<f64> {
    on_value(theta, data, LossKind::Full(weights))
}

pub fn on_full_grad(theta: &OrdinalParams, data: &PUDataset, weights: &PosteriorWeights) -> Result<Array1<f64>> {
    on_grad(theta, data, LossKind::Full(weights))
}

/// Cumulative-logit negative log-likelihood treating `z` as the class.
pub fn on_naive_loss(theta: &OrdinalParams, data: &PUDataset) -> Result<f64> {
    on_value(theta, data, LossKind::Naive)
}

pub fn on_naive_grad(theta: &OrdinalParams, data: &PUDataset) -> Result<Array1<f64>> {
    on_grad(theta, data, LossKind::Naive)
}

/// Class probabilities `(P(y=0|x), ..., P(y=K|x))`.
pub fn mn_predict_proba(params: &MultinomialParams, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
    if x.len() != params.p() {
        return Err(Error::DimensionMismatch(format!("x has length {} but p={}", x.len(), params.p())));
    }
    let u: Vec<f64> = params.theta.t().dot(&x).iter().zip(&params.b).map(|(a, b)| a + b).collect();
    let mut s = vec![0.0; u.len()];
    grad_log_partition_into(&u, &mut s);
    // reference class from the stabilized partition to keep the sum at one
    let m = u.iter().copied().fold(0.0, f64::max);
    let total = (-m).exp() + u.iter().map(|v| (v - m).exp()).sum::<f64>();
    let mut out = Vec::with_capacity(u.len() + 1);
    out.push((-m).exp() / total);
    out.extend(s);
    Ok(out)
}

/// Class probabilities under the cumulative-logit model.
pub fn on_predict_proba(theta: &OrdinalParams, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
    let u = crate::math::ordinal_u(x, theta)?;
    let mut out = Vec::with_capacity(u.len() + 1);
    out.push(sigmoid(-u[0]));
    out.extend(ordinal_p(&u).into_iter().map(|v| v.max(0.0)));
    Ok(out)
}

/// Index of the largest probability; ties go to the smallest index.
pub fn predict_label(proba: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in proba.iter().enumerate().skip(1) {
        if *v > proba[best] {
            best = j;
        }
    }
    best
}

/// Posterior weights of the positive classes given the observed labels.
pub fn mn_posterior(params: &MultinomialParams, data: &PUDataset) -> Result<PosteriorWeights> {
    check_dims(data, params.p(), params.k())?;
    let shift = scenario_posterior_shift(data.scenario());
    let lin = data.x().dot(&params.theta);
    let k = params.k();
    let mut out = Array2::zeros((data.n(), k));
    let mut eta = vec![0.0; k];
    let mut s = vec![0.0; k];
    for (i, &z) in data.z().iter().enumerate() {
        if z > 0 {
            out[(i, z - 1)] = 1.0;
            continue;
        }
        for j in 0..k {
            eta[j] = lin[(i, j)] + params.b[j] + shift[j];
        }
        grad_log_partition_into(&eta, &mut s);
        out.row_mut(i).assign(&ArrayView1::from(&s));
    }
    Ok(out)
}

pub fn on_posterior(theta: &OrdinalParams, data: &PUDataset) -> Result<PosteriorWeights> {
    check_dims(data, theta.p(), theta.k())?;
    let shift = scenario_posterior_shift(data.scenario());
    let k = theta.k();
    let xb = data.x().dot(&theta.beta());
    let offsets = theta.offsets().to_vec();
    let mut out = Array2::zeros((data.n(), k));
    let mut u = vec![0.0; k];
    let mut eta = vec![0.0; k];
    let mut s = vec![0.0; k];
    for (i, &z) in data.z().iter().enumerate() {
        if z > 0 {
            out[(i, z - 1)] = 1.0;
            continue;
        }
        crate::math::ordinal_u_into(xb[i], &offsets, &mut u);
        let sp = crate::math::softplus(u[0]);
        for ((e, lp), sh) in eta.iter_mut().zip(crate::math::ordinal_log_p(&u)).zip(&shift) {
            *e = lp + sp + sh;
        }
        grad_log_partition_into(&eta, &mut s);
        out.row_mut(i).assign(&ArrayView1::from(&s));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
