//! Per-sample loss kernels shared by every objective.
//!
//! A row contributes `A(f) - t^T f`, where `t` is the row's target vector
//! (a unit vector for an observed positive label, zero for an unlabeled
//! row, posterior weights inside EM) and `f` is either the PU link applied
//! to a class log-odds vector `eta` or `eta` plus a fixed offset inside `A`.

use crate::math::{grad_log_partition_into, log_partition, ordinal_log_p_into, sigmoid, softplus};

/// How a row's class log-odds enter the loss.
#[derive(Debug, Clone)]
pub(crate) enum RowLoss {
    /// Observed PU likelihood: `f = eta + log_kappa - A(eta)`.
    Pu { log_kappa: Vec<f64> },
    /// `A(eta + log_c) - t^T eta`: the naive likelihood (`log_c = 0`) and
    /// the complete-data surrogates.
    Plain { log_c: Vec<f64> },
}

/// Reusable buffers for one row.
pub(crate) struct Scratch {
    pub eta: Vec<f64>,
    pub f: Vec<f64>,
    pub s: Vec<f64>,
    pub g: Vec<f64>,
    pub cum: Vec<f64>,
    pub log_p: Vec<f64>,
    pub alpha: Vec<f64>,
    pub u: Vec<f64>,
}

impl Scratch {
    pub fn new(k: usize) -> Self {
        Self {
            eta: vec![0.0; k],
            f: vec![0.0; k],
            s: vec![0.0; k],
            g: vec![0.0; k],
            cum: vec![0.0; k],
            log_p: vec![0.0; k],
            alpha: vec![0.0; k + 1],
            u: vec![0.0; k],
        }
    }
}

/// Loss of one row given `sc.eta`. When `want_grad`, the gradient with
/// respect to `eta` is left in `sc.g`.
pub(crate) fn eta_row(rule: &RowLoss, target: &[f64], sc: &mut Scratch, want_grad: bool) -> f64 {
    match rule {
        RowLoss::Pu { log_kappa } => {
            let a_eta = if want_grad {
                grad_log_partition_into(&sc.eta, &mut sc.s)
            } else {
                log_partition(&sc.eta)
            };
            for ((f, e), lk) in sc.f.iter_mut().zip(&sc.eta).zip(log_kappa) {
                *f = e + lk - a_eta;
            }
            let loss = if want_grad {
                grad_log_partition_into(&sc.f, &mut sc.g)
            } else {
                log_partition(&sc.f)
            } - dot(target, &sc.f);
            if want_grad {
                let mut total = 0.0;
                for (g, t) in sc.g.iter_mut().zip(target) {
                    *g -= t;
                    total += *g;
                }
                // (I - 1 s^T)^T g = g - s (1^T g)
                for (g, s) in sc.g.iter_mut().zip(&sc.s) {
                    *g -= s * total;
                }
            }
            loss
        }
        RowLoss::Plain { log_c } => {
            for ((f, e), c) in sc.f.iter_mut().zip(&sc.eta).zip(log_c) {
                *f = e + c;
            }
            let a = if want_grad {
                grad_log_partition_into(&sc.f, &mut sc.g)
            } else {
                log_partition(&sc.f)
            };
            if want_grad {
                for (g, t) in sc.g.iter_mut().zip(target) {
                    *g -= t;
                }
            }
            a - dot(target, &sc.eta)
        }
    }
}

/// How an ordinal row is scored.
#[derive(Debug, Clone)]
pub(crate) enum OrdinalRule {
    /// Case-control observed likelihood with `f = log_kappa + log p(u)`.
    Direct { log_kappa: Vec<f64> },
    /// Go through `eta = log r(u) + shift` and a generic row loss.
    ViaRatio { shift: Vec<f64>, rule: RowLoss },
}

/// Loss of one ordinal row with regression score `xb` and offsets
/// `theta[p..]`. On return with `want_grad`, `sc.u` holds the gradient with
/// respect to the linear predictor `u`. Returns `+inf` when some class
/// probability is not positive.
pub(crate) fn ordinal_row(
    rule: &OrdinalRule,
    xb: f64,
    offsets: &[f64],
    target: &[f64],
    sc: &mut Scratch,
    want_grad: bool,
) -> f64 {
    crate::math::ordinal_u_into(xb, offsets, &mut sc.u);
    ordinal_log_p_into(&sc.u, &mut sc.cum, &mut sc.log_p);
    if sc.log_p.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let u1 = sc.u[0];
    let (loss, extra) = match rule {
        OrdinalRule::Direct { log_kappa } => {
            for ((e, lp), lk) in sc.eta.iter_mut().zip(&sc.log_p).zip(log_kappa) {
                *e = lp + lk;
            }
            let a = if want_grad {
                grad_log_partition_into(&sc.eta, &mut sc.g)
            } else {
                log_partition(&sc.eta)
            };
            if want_grad {
                for (g, t) in sc.g.iter_mut().zip(target) {
                    *g -= t;
                }
            }
            (a - dot(target, &sc.eta), 0.0)
        }
        OrdinalRule::ViaRatio { shift, rule } => {
            let sp = softplus(u1);
            for ((e, lp), sh) in sc.eta.iter_mut().zip(&sc.log_p).zip(shift) {
                *e = lp + sp + sh;
            }
            let loss = eta_row(rule, target, sc, want_grad);
            let total: f64 = sc.g.iter().sum();
            (loss, sigmoid(u1) * total)
        }
    };
    if want_grad {
        ordinal_chain(sc);
        sc.u[0] += extra;
    }
    loss
}

/// `sc.u <- J^T sc.g` with `J` the Jacobian of `log p(u)`.
fn ordinal_chain(sc: &mut Scratch) {
    let k = sc.u.len();
    for (a, c) in sc.alpha.iter_mut().zip(&sc.cum) {
        *a = sigmoid(*c) * sigmoid(-c);
    }
    sc.alpha[k] = 0.0;
    // c_i = g_i / p_i
    for i in 0..k {
        sc.f[i] = sc.g[i] * (-sc.log_p[i]).exp();
    }
    for col in 0..k {
        let mut v = 0.0;
        for i in 0..k {
            if col <= i {
                v += sc.alpha[i] * sc.f[i];
            }
            if col <= i + 1 {
                v -= sc.alpha[i + 1] * sc.f[i];
            }
        }
        sc.u[col] = v;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
