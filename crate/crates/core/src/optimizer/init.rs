//! Offsets-only starting points.
//!
//! With the regression part at zero every row shares one linear predictor,
//! so the intercept model is saturated: its fitted class probabilities can
//! be matched to the label frequencies directly. The closed form is then
//! polished by damped Newton on the `K`-dimensional problem.

use crate::data::{PUDataset, Scenario};
use crate::error::Result;
use crate::models::{InterceptMode, InterceptProblem, LossKind, MultinomialObjective, OrdinalObjective};
use crate::models::kernel::{OrdinalRule, RowLoss};
use crate::params::{MultinomialParams, OrdinalParams};

const GRAD_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 100;

/// Intercept-only fit of the multinomial observed likelihood.
pub fn intercept_only_init_mn(data: &PUDataset) -> Result<MultinomialParams> {
    let obj = MultinomialObjective::new(data, LossKind::Observed)?;
    Ok(mn_intercept_start(&obj, data.p(), data.k()))
}

/// Intercept-only fit of the ordinal observed likelihood.
pub fn intercept_only_init_on(data: &PUDataset) -> Result<OrdinalParams> {
    let obj = OrdinalObjective::new(data, LossKind::Observed)?;
    Ok(on_intercept_start(&obj, data.p(), data.k(), 1e-8))
}

pub(crate) fn mn_intercept_start(obj: &MultinomialObjective<'_>, p: usize, k: usize) -> MultinomialParams {
    let prob = obj.intercept_problem();
    let start = class_probs(&prob, obj.scenario()).map(|q| (1..=k).map(|j| (q[j] / q[0]).ln()).collect());
    let fallback = vec![0.0; k];
    let b = polish(&prob, start, fallback, None);
    let mut out = MultinomialParams::zeros(p, k);
    out.b = ndarray::Array1::from(b);
    out
}

pub(crate) fn on_intercept_start(obj: &OrdinalObjective<'_>, p: usize, k: usize, floor: f64) -> OrdinalParams {
    let prob = obj.intercept_problem();
    let start = class_probs(&prob, obj.scenario()).map(|q| cut_offsets(&q));
    let balanced: Vec<f64> = (0..=k).map(|_| 1.0 / (k + 1) as f64).collect();
    let b = polish(&prob, start, cut_offsets(&balanced), Some(floor));
    let mut theta = vec![0.0; p];
    theta.extend(b);
    OrdinalParams::from_flat_unchecked(&theta, p)
}

/// Offsets `(nu_1, nu_2 - nu_1, ...)` with `nu_j = logit(q_0 + ... + q_{j-1})`.
fn cut_offsets(q: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(q.len() - 1);
    for (j, qj) in q[..q.len() - 1].iter().enumerate() {
        acc += qj;
        let nu = (acc / (1.0 - acc)).ln();
        out.push(if j == 0 { nu } else { nu - prev });
        prev = nu;
    }
    out
}

/// Population class probabilities `q_0..q_K` whose implied observed-label
/// distribution equals the mean target, when such a point exists.
fn class_probs(prob: &InterceptProblem, scenario: &Scenario) -> Option<Vec<f64>> {
    let freq = &prob.target;
    let f0 = 1.0 - freq.iter().sum::<f64>();
    let observed = matches!(
        &prob.mode,
        InterceptMode::Multinomial { rule: RowLoss::Pu { .. }, .. }
            | InterceptMode::Ordinal { rule: OrdinalRule::Direct { .. } }
            | InterceptMode::Ordinal { rule: OrdinalRule::ViaRatio { rule: RowLoss::Pu { .. }, .. } }
    );
    let naive = matches!(
        &prob.mode,
        InterceptMode::Multinomial { rule: RowLoss::Plain { log_c }, .. }
            | InterceptMode::Ordinal { rule: OrdinalRule::ViaRatio { rule: RowLoss::Plain { log_c }, .. } }
            if log_c.iter().all(|c| *c == 0.0)
    );
    let pos: Vec<f64> = if observed {
        match scenario {
            // P(z=k) / P(z=0) = kappa_k q_k
            Scenario::CaseControl(r) => freq.iter().zip(r.as_slice()).map(|(f, k)| f / (k * f0)).collect(),
            // P(z=k) = pi_k q_k
            Scenario::SingleTraining(pi) => freq.iter().zip(pi.as_slice()).map(|(f, p)| f / p).collect(),
        }
    } else if naive {
        freq.clone()
    } else {
        return None;
    };
    let q0 = 1.0 - pos.iter().sum::<f64>();
    if !(f0 > 0.0 && q0 > 0.0 && pos.iter().all(|q| *q > 0.0 && q.is_finite())) {
        return None;
    }
    let mut q = vec![q0];
    q.extend(pos);
    Some(q)
}

/// Damped Newton with a finite-difference Hessian of the analytic gradient.
fn polish(prob: &InterceptProblem, start: Option<Vec<f64>>, fallback: Vec<f64>, floor: Option<f64>) -> Vec<f64> {
    let from_closed_form = start.is_some();
    if !from_closed_form {
        log::warn!("no closed-form intercept fit for these label frequencies; starting Newton from a neutral point");
    }
    let mut x = start.unwrap_or_else(|| fallback.clone());
    let k = x.len();
    let mut g = vec![0.0; k];
    let mut fx = prob.eval(&x, Some(&mut g));
    if !fx.is_finite() {
        x = fallback.clone();
        fx = prob.eval(&x, Some(&mut g));
    }
    for _ in 0..MAX_NEWTON {
        if norm(&g) <= GRAD_TOL {
            return x;
        }
        let dir = newton_direction(prob, &x, &g).unwrap_or_else(|| g.iter().map(|v| -v).collect());
        let slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        let dir = if slope < 0.0 { dir } else { g.iter().map(|v| -v).collect() };
        let slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        let mut t = 1.0;
        let mut moved = false;
        let mut gy = vec![0.0; k];
        for _ in 0..60 {
            let mut y: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            if let Some(fl) = floor {
                for v in &mut y[1..] {
                    *v = v.max(fl);
                }
            }
            let fy = prob.eval(&y, Some(&mut gy));
            if fy.is_finite() && fy <= fx + 1e-4 * t * slope {
                x = y;
                fx = fy;
                std::mem::swap(&mut g, &mut gy);
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if norm(&g) > 1e-8 {
        log::warn!("intercept-only fit stopped with gradient norm {:.3e}", norm(&g));
    }
    if fx.is_finite() && x.iter().all(|v| v.is_finite()) {
        x
    } else {
        log::warn!("intercept-only fit diverged; using neutral offsets");
        fallback
    }
}

fn newton_direction(prob: &InterceptProblem, x: &[f64], g: &[f64]) -> Option<Vec<f64>> {
    let k = x.len();
    let mut h = vec![vec![0.0; k]; k];
    let mut gp = vec![0.0; k];
    let mut gm = vec![0.0; k];
    for j in 0..k {
        let step = 1e-6 * x[j].abs().max(1.0);
        let mut a = x.to_vec();
        a[j] += step;
        let mut b = x.to_vec();
        b[j] -= step;
        if !(prob.eval(&a, Some(&mut gp)).is_finite() && prob.eval(&b, Some(&mut gm)).is_finite()) {
            return None;
        }
        for i in 0..k {
            h[i][j] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    for i in 0..k {
        for j in 0..i {
            let s = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = s;
            h[j][i] = s;
        }
    }
    solve(h, g.iter().map(|v| -v).collect())
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let m = a[r][c] / a[c][c];
            for cc in c..n {
                a[r][cc] -= m * a[c][cc];
            }
            b[r] -= m * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{sigmoid, CaseControlRatios, SingleTrainingProbs};
    use crate::models::{mn_observed_grad, on_observed_grad};
    use ndarray::Array2;

    fn data(z: Vec<usize>, scenario: Scenario) -> PUDataset {
        let n = z.len();
        let x = Array2::from_shape_fn((n, 2), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        PUDataset::new(x, z, scenario, None).unwrap()
    }

    #[test]
    fn balanced_case_control_gives_equal_offsets() {
        let d = data(vec![0, 0, 1, 2, 0, 0, 1, 2], Scenario::CaseControl(CaseControlRatios::new(vec![1.0, 1.0]).unwrap()));
        let m = intercept_only_init_mn(&d).unwrap();
        assert!((m.b[0] - m.b[1]).abs() < 1e-12);
        assert!(m.theta.iter().all(|v| *v == 0.0));
        let (_, gb) = mn_observed_grad(&m, &d).unwrap();
        assert!(gb.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-8);
    }

    #[test]
    fn k1_matches_bisection() {
        let kappa = 0.7;
        let d = data(vec![0, 0, 0, 1, 1, 0, 0], Scenario::CaseControl(CaseControlRatios::new(vec![kappa]).unwrap()));
        let m = intercept_only_init_mn(&d).unwrap();
        // observed P(z=1) = kappa sigma(b) / (1 + kappa sigma(b)) must equal 2/7
        let target = 2.0 / 7.0;
        let h = |b: f64| {
            let q = sigmoid(b);
            kappa * q / (1.0 + kappa * q) - target
        };
        let (mut lo, mut hi) = (-20.0, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((m.b[0] - 0.5 * (lo + hi)).abs() < 1e-9);
    }

    #[test]
    fn ordinal_init_is_stationary() {
        for scenario in [
            Scenario::CaseControl(CaseControlRatios::new(vec![0.9, 1.3, 0.4]).unwrap()),
            Scenario::SingleTraining(SingleTrainingProbs::new(vec![0.5, 0.7, 0.6]).unwrap()),
        ] {
            let d = data(vec![0, 0, 1, 2, 0, 3, 0, 1, 0, 0, 2, 0], scenario);
            let t = intercept_only_init_on(&d).unwrap();
            assert!(t.beta().iter().all(|v| *v == 0.0));
            let g = on_observed_grad(&OrdinalParams::new(t.theta().clone(), 2).unwrap(), &d).unwrap();
            let off: f64 = g.iter().skip(2).map(|v| v * v).sum::<f64>().sqrt();
            assert!(off <= 1e-8, "{off}");
        }
    }

    #[test]
    fn infeasible_frequencies_fall_back() {
        // half the rows labeled with pi = 0.3 cannot be matched exactly
        let d = data(vec![1, 1, 1, 0, 0, 0], Scenario::SingleTraining(SingleTrainingProbs::new(vec![0.3]).unwrap()));
        let m = intercept_only_init_mn(&d).unwrap();
        assert!(m.b[0].is_finite());
    }
}
