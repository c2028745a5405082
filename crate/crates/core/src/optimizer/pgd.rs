use super::{FitResult, GroupStructure, SmoothObjective, SolverConfig};
use crate::error::{Error, Result};

/// Nonsmooth part: `lambda * group_norm` on the leading `groups.dim()`
/// coordinates, plus an optional lower bound on the coordinates
/// `floor.0..floor.1`.
pub(crate) struct Composite<'a> {
    pub groups: &'a GroupStructure,
    pub lambda: f64,
    pub floor: Option<(usize, usize, f64)>,
}

impl Composite<'_> {
    pub fn penalty(&self, x: &[f64]) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            self.lambda * self.groups.norm_unchecked(x)
        }
    }

    /// Prox of `step * penalty` followed by the bound projection. Both act
    /// on disjoint coordinates, so the composition is the exact prox of the
    /// penalty plus the indicator of the feasible box.
    pub fn prox(&self, y: &mut [f64], step: f64) {
        self.groups.prox_in_place(y, step * self.lambda);
        if let Some((lo, hi, floor)) = self.floor {
            for v in &mut y[lo..hi] {
                *v = v.max(floor);
            }
        }
    }

    /// `||x - prox(x - step * g)|| / step`.
    pub fn residual(&self, x: &[f64], g: &[f64], step: f64) -> f64 {
        let mut y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - step * b).collect();
        self.prox(&mut y, step);
        dist(x, &y) / step
    }
}

pub(crate) struct RawFit {
    pub x: Vec<f64>,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gap: f64,
}

impl RawFit {
    pub fn into_fit<P>(self, lambda: f64, build: impl FnOnce(Vec<f64>) -> P) -> FitResult<P> {
        FitResult {
            params: build(self.x),
            objective_trace: self.trace,
            iterations: self.iterations,
            converged: self.converged,
            stationarity_gap: self.gap,
            lambda,
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Proximal gradient descent with backtracking.
///
/// A trial step `x+ = prox(x - eta grad)` is accepted when
/// `F(x+) <= F(x) - ||x+ - x||^2 / (2 eta)`, so the recorded objective never
/// increases. The next trial step is the secant estimate `<s, s> / <s, y>`
/// from the last move (capped at `max_step`) or, with `spectral` off, the
/// accepted step doubled after a first-try acceptance (capped at the
/// initial step).
pub(crate) fn pgd<O: SmoothObjective + ?Sized>(
    obj: &O,
    comp: &Composite<'_>,
    x0: Vec<f64>,
    cfg: &SolverConfig,
) -> Result<RawFit> {
    let ls = &cfg.line_search;
    let d = obj.dim();
    debug_assert_eq!(x0.len(), d);
    let mut x = x0;
    let mut g = vec![0.0; d];
    let f0 = obj.value_and_grad(&x, &mut g);
    let mut fx = f0 + comp.penalty(&x);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(0));
    }
    let mut trace = vec![fx];
    let mut step = ls.initial_step;
    let mut trial = ls.initial_step;
    let mut calm = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut y = vec![0.0; d];
    let mut gy = vec![0.0; d];

    'outer: while iterations < cfg.max_iter {
        iterations += 1;
        let mut eta = trial;
        let mut halvings = 0;
        let fy = loop {
            for ((yi, xi), gi) in y.iter_mut().zip(&x).zip(&g) {
                *yi = xi - eta * gi;
            }
            comp.prox(&mut y, eta);
            let d2: f64 = y.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 == 0.0 {
                // x is a fixed point of the proximal-gradient map
                step = eta;
                converged = true;
                break 'outer;
            }
            let smooth = obj.value_and_grad(&y, &mut gy);
            let fy = smooth + comp.penalty(&y);
            if fy.is_finite() && fy <= fx - d2 / (2.0 * eta) && gy.iter().all(|v| v.is_finite()) {
                break fy;
            }
            halvings += 1;
            if halvings > ls.max_halvings {
                // no representable decrease left along the prox-gradient path
                converged = true;
                break 'outer;
            }
            eta *= ls.shrink;
        };
        step = eta;
        trial = next_trial(ls, &x, &y, &g, &gy, eta, halvings == 0);
        let rel = (fx - fy) / fx.abs().max(1.0);
        std::mem::swap(&mut x, &mut y);
        std::mem::swap(&mut g, &mut gy);
        fx = fy;
        trace.push(fx);
        if rel < cfg.tol {
            calm += 1;
            if calm >= cfg.patience {
                converged = true;
                break;
            }
        } else {
            calm = 0;
        }
    }
    let gap = comp.residual(&x, &g, step.min(ls.initial_step));
    Ok(RawFit {
        x,
        trace,
        iterations,
        converged,
        gap,
    })
}

fn next_trial(ls: &super::LineSearch, x: &[f64], y: &[f64], g: &[f64], gy: &[f64], eta: f64, first_try: bool) -> f64 {
    let doubled = if first_try { 2.0 * eta } else { eta };
    if !ls.spectral {
        return doubled.min(ls.initial_step);
    }
    let (mut ss, mut sy) = (0.0, 0.0);
    for i in 0..x.len() {
        let s = y[i] - x[i];
        ss += s * s;
        sy += s * (gy[i] - g[i]);
    }
    let bb = ss / sy;
    if sy > 0.0 && bb.is_finite() {
        // eta was just accepted, so proposing far below it only wastes iterations
        bb.clamp(eta * ls.shrink, ls.max_step)
    } else {
        doubled.min(ls.max_step)
    }
}

/// Proximal-gradient residual at `x`, with the step chosen by the same
/// sufficient-decrease test the solver uses.
pub(crate) fn stationarity<O: SmoothObjective + ?Sized>(
    obj: &O,
    comp: &Composite<'_>,
    x: &[f64],
    ls: &super::LineSearch,
) -> f64 {
    let mut g = vec![0.0; x.len()];
    let fx = obj.value_and_grad(x, &mut g) + comp.penalty(x);
    let mut eta = ls.initial_step;
    let mut y = vec![0.0; x.len()];
    for _ in 0..=ls.max_halvings {
        for ((yi, xi), gi) in y.iter_mut().zip(x).zip(&g) {
            *yi = xi - eta * gi;
        }
        comp.prox(&mut y, eta);
        let d2: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 == 0.0 {
            return 0.0;
        }
        let fy = obj.value(&y) + comp.penalty(&y);
        if fy.is_finite() && fy <= fx - d2 / (2.0 * eta) {
            break;
        }
        eta *= ls.shrink;
    }
    comp.residual(x, &g, eta)
}
