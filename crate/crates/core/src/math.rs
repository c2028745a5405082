//! Numeric building blocks: the multinomial log-partition function, the
//! positive-unlabeled link functions and the cumulative-logit helpers.
//!
//! Every public function here is pure. The `*_into` variants write into
//! caller-provided buffers and are what the loss kernels use per sample.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::OrdinalParams;

/// Per-class ratio `kappa_k = n_k / (pi_k * n_u)` of labeled to
/// prevalence-weighted unlabeled sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CaseControlRatios(Vec<f64>);

impl CaseControlRatios {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        if kappa.is_empty() {
            return Err(Error::InvalidRatios("need at least one positive class".into()));
        }
        if let Some((k, v)) = kappa
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidRatios(format!("kappa[{}] = {v}", k + 1)));
        }
        Ok(Self(kappa))
    }

    /// Ratios from the study design: labeled counts per class, class
    /// prevalences and the unlabeled sample size.
    pub fn from_design(n_labeled: &[usize], prevalence: &[f64], n_unlabeled: usize) -> Result<Self> {
        if n_labeled.len() != prevalence.len() {
            return Err(Error::LengthMismatch {
                left: n_labeled.len(),
                right: prevalence.len(),
            });
        }
        Self::new(
            n_labeled
                .iter()
                .zip(prevalence)
                .map(|(&nk, &pk)| nk as f64 / (pk * n_unlabeled as f64))
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn log(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.ln()).collect()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl TryFrom<Vec<f64>> for CaseControlRatios {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CaseControlRatios> for Vec<f64> {
    fn from(r: CaseControlRatios) -> Self {
        r.0
    }
}

/// Probability that a positive sample of each class keeps its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SingleTrainingProbs(Vec<f64>);

impl SingleTrainingProbs {
    pub fn new(pi_st: Vec<f64>) -> Result<Self> {
        if pi_st.is_empty() {
            return Err(Error::InvalidProbabilities("need at least one positive class".into()));
        }
        if let Some((k, v)) = pi_st
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && **v < 1.0))
        {
            return Err(Error::InvalidProbabilities(format!("pi_st[{}] = {v}", k + 1)));
        }
        Ok(Self(pi_st))
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Case-control ratios with the same observed-data likelihood:
    /// `kappa_k = pi_k / (1 - pi_k)`.
    pub fn odds(&self) -> CaseControlRatios {
        CaseControlRatios(self.0.iter().map(|p| p / (1.0 - p)).collect())
    }

    pub fn log_odds(&self) -> Vec<f64> {
        self.odds().log()
    }

    /// `log(1 - pi_k)`, the offset shift of the reparameterization.
    pub fn log_complement(&self) -> Vec<f64> {
        self.0.iter().map(|p| (-p).ln_1p()).collect()
    }
}

impl TryFrom<Vec<f64>> for SingleTrainingProbs {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SingleTrainingProbs> for Vec<f64> {
    fn from(r: SingleTrainingProbs) -> Self {
        r.0
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `log(sigmoid(t))`.
#[inline]
pub fn log_sigmoid(t: f64) -> f64 {
    -softplus(-t)
}

/// `A(u) = log(1 + sum_k e^{u_k})`, shifted by `max(0, max_k u_k)`.
pub fn log_partition(u: &[f64]) -> f64 {
    let m = u.iter().copied().fold(0.0, f64::max);
    if m == 0.0 {
        u.iter().map(|v| v.exp()).sum::<f64>().ln_1p()
    } else {
        m + ((-m).exp() + u.iter().map(|v| (v - m).exp()).sum::<f64>()).ln()
    }
}

/// Writes `grad A(u)` into `out` and returns `A(u)`.
pub fn grad_log_partition_into(u: &[f64], out: &mut [f64]) -> f64 {
    let m = u.iter().copied().fold(0.0, f64::max);
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(u) {
        *o = (v - m).exp();
        sum += *o;
    }
    // same operation order as `log_partition` so values agree bit for bit
    let total = (-m).exp() + sum;
    for o in out.iter_mut() {
        *o /= total;
    }
    if m == 0.0 {
        sum.ln_1p()
    } else {
        m + total.ln()
    }
}

/// Softmax without the reference class: `e^{u_k} / (1 + sum_j e^{u_j})`.
pub fn grad_log_partition(u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    grad_log_partition_into(u, &mut out);
    out
}

/// `diag(s) - s s^T` with `s = grad A(u)`.
pub fn hess_log_partition(u: &[f64]) -> Array2<f64> {
    let s = grad_log_partition(u);
    let k = s.len();
    Array2::from_shape_fn((k, k), |(i, j)| {
        let d = if i == j { s[i] } else { 0.0 };
        d - s[i] * s[j]
    })
}

/// `f(u)_k = u_k + log kappa_k - A(u)` given precomputed `log kappa`.
pub fn pu_link_into(u: &[f64], log_kappa: &[f64], out: &mut [f64]) {
    let a = log_partition(u);
    for ((o, v), lk) in out.iter_mut().zip(u).zip(log_kappa) {
        *o = v + lk - a;
    }
}

/// Case-control link.
pub fn pu_link_cc(u: &[f64], ratios: &CaseControlRatios) -> Result<Vec<f64>> {
    check_len(u.len(), ratios.k())?;
    let mut out = vec![0.0; u.len()];
    pu_link_into(u, &ratios.log(), &mut out);
    Ok(out)
}

/// Jacobian of the PU link, `I - 1 (grad A(u))^T`. Rows index outputs.
/// The ratios only add a constant, so they do not enter.
pub fn pu_link_grad_cc(u: &[f64]) -> Array2<f64> {
    let s = grad_log_partition(u);
    let k = s.len();
    Array2::from_shape_fn((k, k), |(i, j)| if i == j { 1.0 - s[j] } else { -s[j] })
}

/// Single-training link `u_k + log(pi_k / (1 - pi_k)) - A(u)`.
pub fn pu_link_st(u: &[f64], probs: &SingleTrainingProbs) -> Result<Vec<f64>> {
    check_len(u.len(), probs.k())?;
    let mut out = vec![0.0; u.len()];
    pu_link_into(u, &probs.log_odds(), &mut out);
    Ok(out)
}

/// Linear predictor of the cumulative-logit model,
/// `(x^T beta - theta_{p+1}, -theta_{p+2}, ..., -theta_{p+K})`.
pub fn ordinal_u(x: ArrayView1<'_, f64>, theta: &OrdinalParams) -> Result<Vec<f64>> {
    if x.len() != theta.p() {
        return Err(Error::DimensionMismatch(format!(
            "covariate length {} vs p={}",
            x.len(),
            theta.p()
        )));
    }
    let xb = x.dot(&theta.beta());
    let mut u = vec![0.0; theta.k()];
    ordinal_u_into(xb, theta.offsets().as_slice().expect("contiguous"), &mut u);
    Ok(u)
}

#[inline]
pub(crate) fn ordinal_u_into(xb: f64, offsets: &[f64], out: &mut [f64]) {
    out[0] = xb - offsets[0];
    for (o, d) in out[1..].iter_mut().zip(&offsets[1..]) {
        *o = -d;
    }
}

/// Class probabilities `p_j(u)`, `j = 1..K`, as differences of adjacent
/// cumulative sigmoids. Together with `sigmoid(-u_1)` they telescope to one.
pub fn ordinal_p(u: &[f64]) -> Vec<f64> {
    let k = u.len();
    let mut cum = Vec::with_capacity(k);
    let mut acc = 0.0;
    for v in u {
        acc += v;
        cum.push(acc);
    }
    (0..k)
        .map(|j| {
            if j + 1 < k {
                sigmoid(-cum[j + 1]) - sigmoid(-cum[j])
            } else {
                1.0 - sigmoid(-cum[j])
            }
        })
        .collect()
}

/// `alpha_j(u) = e^{S_j} / (1 + e^{S_j})^2` with `S_j = sum_{l<=j} u_l`
/// for `j <= K`, and `alpha_{K+1} = 0`.
pub fn ordinal_alpha(u: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len() + 1);
    let mut acc = 0.0;
    for v in u {
        acc += v;
        out.push(sigmoid(acc) * sigmoid(-acc));
    }
    out.push(0.0);
    out
}

/// `log p_j(u)` in product form,
/// `log sigmoid(-S_{j+1}) + log sigmoid(S_j) + log(1 - e^{u_{j+1}})`,
/// which stays accurate when adjacent cumulative probabilities are close.
/// Entries are `NaN` or `-inf` when `u_{j+1} >= 0`.
pub fn ordinal_log_p_into(u: &[f64], cum: &mut [f64], out: &mut [f64]) {
    let k = u.len();
    let mut acc = 0.0;
    for (c, v) in cum.iter_mut().zip(u) {
        acc += v;
        *c = acc;
    }
    for j in 0..k {
        out[j] = if j + 1 < k {
            log_sigmoid(-cum[j + 1]) + log_sigmoid(cum[j]) + (-u[j + 1].exp_m1()).ln()
        } else {
            log_sigmoid(cum[j])
        };
    }
}

pub fn ordinal_log_p(u: &[f64]) -> Vec<f64> {
    let mut cum = vec![0.0; u.len()];
    let mut out = vec![0.0; u.len()];
    ordinal_log_p_into(u, &mut cum, &mut out);
    out
}

/// Jacobian of `log p(u)`: entry `(j, k)` is
/// `(alpha_j 1{k<=j} - alpha_{j+1} 1{k<=j+1}) / p_j`. Row-major `K x K`.
pub(crate) fn ordinal_log_p_jacobian_into(
    cum: &[f64],
    log_p: &[f64],
    alpha: &mut [f64],
    out: &mut [f64],
) {
    let k = cum.len();
    for (a, c) in alpha.iter_mut().zip(cum) {
        *a = sigmoid(*c) * sigmoid(-c);
    }
    alpha[k] = 0.0;
    for j in 0..k {
        let inv_p = (-log_p[j]).exp();
        let row = &mut out[j * k..(j + 1) * k];
        for (col, r) in row.iter_mut().enumerate() {
            let mut v = 0.0;
            if col <= j {
                v += alpha[j];
            }
            if col <= j + 1 {
                v -= alpha[j + 1];
            }
            *r = v * inv_p;
        }
    }
}

/// Jacobian of the ordinal case-control link `f^ON` with respect to `u`
/// (identical to that of `log p`).
pub fn ordinal_link_grad(u: &[f64]) -> Array2<f64> {
    let k = u.len();
    let mut cum = vec![0.0; k];
    let mut log_p = vec![0.0; k];
    let mut alpha = vec![0.0; k + 1];
    let mut jac = vec![0.0; k * k];
    ordinal_log_p_into(u, &mut cum, &mut log_p);
    ordinal_log_p_jacobian_into(&cum, &log_p, &mut alpha, &mut jac);
    Array2::from_shape_vec((k, k), jac).expect("square")
}

/// Odds `P(y=j|x) / P(y=0|x)` for `j = 1..K` under the cumulative-logit model.
pub fn ordinal_ratio(x: ArrayView1<'_, f64>, theta: &OrdinalParams) -> Result<Vec<f64>> {
    let u = ordinal_u(x, theta)?;
    let sp = softplus(u[0]);
    Ok(ordinal_log_p(&u).into_iter().map(|lp| (lp + sp).exp()).collect())
}

/// Ordinal case-control link `f^ON(u)_j = log kappa_j + log p_j(u)`.
pub fn ordinal_link_cc(u: &[f64], ratios: &CaseControlRatios) -> Result<Vec<f64>> {
    check_len(u.len(), ratios.k())?;
    let log_p = ordinal_log_p(u);
    log_p
        .iter()
        .zip(ratios.as_slice())
        .enumerate()
        .map(|(j, (lp, kap))| {
            if lp.is_finite() {
                Ok(kap.ln() + lp)
            } else {
                Err(Error::NonPositiveProbability { class: j + 1 })
            }
        })
        .collect()
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("vector of length {a} vs K={b}")))
    }
}
