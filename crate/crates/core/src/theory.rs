//! Curvature functions and feasible-region radius bounds for the two
//! models, plus post-hoc checks of whether an estimate lies in the region
//! where those curvature bounds apply. Nothing here affects fitting.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::CaseControlRatios;
use crate::params::{MultinomialParams, OrdinalParams};

/// Quantities the bounds depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    /// Bound on the covariate sup-norm.
    pub cov_bound: f64,
    /// Magnitude of the true parameter.
    pub param_radius: f64,
    /// Smallest true cut-point increment (ordinal model only).
    pub min_increment: Option<f64>,
    pub k: usize,
    pub ratios: CaseControlRatios,
}

impl TheoryInputs {
    pub fn new(
        cov_bound: f64,
        param_radius: f64,
        min_increment: Option<f64>,
        ratios: CaseControlRatios,
    ) -> Result<Self> {
        if !(cov_bound > 0.0 && cov_bound.is_finite()) {
            return Err(Error::InvalidConfig(format!("covariate bound must be positive, got {cov_bound}")));
        }
        if !(param_radius >= 0.0 && param_radius.is_finite()) {
            return Err(Error::InvalidConfig(format!("parameter radius must be nonnegative, got {param_radius}")));
        }
        if let Some(r) = min_increment {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidConfig(format!("minimum increment must be positive, got {r}")));
            }
        }
        Ok(Self {
            cov_bound,
            param_radius,
            min_increment,
            k: ratios.k(),
            ratios,
        })
    }

    /// Inputs for a multinomial truth: the radius is the largest column
    /// l1 norm of the regression matrix.
    pub fn for_multinomial(truth: &MultinomialParams, cov_bound: f64, ratios: CaseControlRatios) -> Result<Self> {
        Self::new(cov_bound, max_col_l1(truth.theta.view()), None, ratios)
    }

    /// Inputs for an ordinal truth: the radius is the larger of the l1 norms
    /// of the regression part and the offsets.
    pub fn for_ordinal(truth: &OrdinalParams, cov_bound: f64, ratios: CaseControlRatios) -> Result<Self> {
        let reg: f64 = truth.beta().iter().map(|v| v.abs()).sum();
        let off: f64 = truth.offsets().iter().map(|v| v.abs()).sum();
        let incs = truth.offsets().iter().skip(1).copied().fold(f64::INFINITY, f64::min);
        let min_inc = if truth.k() >= 2 { incs } else { f64::INFINITY };
        Self::new(cov_bound, reg.max(off), Some(min_inc).filter(|v| v.is_finite()), ratios)
    }

    /// Largest absolute covariate entry.
    pub fn covariate_bound(x: ArrayView2<'_, f64>) -> f64 {
        x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn increment(&self) -> Result<f64> {
        self.min_increment
            .ok_or_else(|| Error::InvalidRegion("ordinal bounds need the minimum cut-point increment".into()))
    }
}

fn max_col_l1(m: ArrayView2<'_, f64>) -> f64 {
    m.columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Lower bound on the smallest eigenvalue of the per-sample curvature of
/// the multinomial PU loss within radius `r` of the truth.
pub fn mn_curvature_floor(r: f64, ti: &TheoryInputs) -> f64 {
    let e = (ti.cov_bound * (r + ti.param_radius)).exp();
    ti.ratios.min() / (e * (1.0 + ti.ratios.max()).powi(2) * (1.0 + ti.k as f64 * e).powi(3))
}

/// Restricted-curvature function of the multinomial model. Decreasing in `r`;
/// may be negative.
pub fn h_mn(r: f64, ti: &TheoryInputs) -> f64 {
    mn_curvature_floor(r, ti) - 4.0 * ti.cov_bound * r
}

/// Largest admissible feasible-region radius for the multinomial model.
pub fn r0_bound_mn(ti: &TheoryInputs) -> f64 {
    let e = (ti.cov_bound * ti.param_radius).exp();
    ti.ratios.min() / (e * 4.0 * ti.cov_bound * (1.0 + ti.ratios.max()).powi(2) * (1.0 + 1.1 * ti.k as f64 * e).powi(3))
}

/// Curvature function of the ordinal model for radius `r` and increment
/// slack `slack` (which must be below the minimum true increment).
pub fn h_on(r: f64, slack: f64, ti: &TheoryInputs) -> Result<f64> {
    let r_star = ti.increment()?;
    if slack >= r_star {
        return Err(Error::InvalidRegion(format!("slack {slack} must be below the minimum increment {r_star}")));
    }
    let e = ((ti.cov_bound + 1.0) * (ti.param_radius + r)).exp();
    Ok(((1.0 + e).powi(2) / ((r_star - slack) * e)).max(1.0 + e))
}

/// Largest admissible radius of the ordinal feasible set for increment
/// slack `slack` in `(0, r*)`.
pub fn r0_bound_on(slack: f64, ti: &TheoryInputs) -> Result<f64> {
    let r_star = ti.increment()?;
    if !(slack > 0.0 && slack < r_star) {
        return Err(Error::InvalidRegion(format!("slack {slack} must lie in (0, {r_star})")));
    }
    let c1 = ti.cov_bound + 1.0;
    let gap = 2.0 / (r_star - slack);
    let k = ti.k as f64;
    let lead = ti.ratios.min().min(80.0);
    Ok(lead * (1.0 + (c1 * (ti.param_radius + 0.01)).exp()).powi(-6)
        / (512.0 * c1 * k.powi(3) * (1.0 + gap).powi(3) * (2.0 + gap)))
}

/// Where an estimate sits relative to the feasible region around the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RegionReport {
    Multinomial {
        /// Largest column l1 norm of the difference.
        distance: f64,
        radius_bound: f64,
        curvature: f64,
        inside: bool,
    },
    Ordinal {
        regression_l1: f64,
        offsets_l1: f64,
        /// Smallest perturbation of a cut-point increment; absent when `K = 1`.
        min_increment_change: Option<f64>,
        slack: f64,
        radius_bound: f64,
        curvature: f64,
        inside: bool,
    },
}

impl RegionReport {
    pub fn inside(&self) -> bool {
        match self {
            RegionReport::Multinomial { inside, .. } | RegionReport::Ordinal { inside, .. } => *inside,
        }
    }
}

pub fn region_report_mn(
    estimate: &MultinomialParams,
    truth: &MultinomialParams,
    ti: &TheoryInputs,
) -> Result<RegionReport> {
    if estimate.theta.dim() != truth.theta.dim() {
        return Err(Error::DimensionMismatch("estimate and truth differ in shape".into()));
    }
    let diff = &estimate.theta - &truth.theta;
    let distance = max_col_l1(diff.view());
    let radius_bound = r0_bound_mn(ti);
    Ok(RegionReport::Multinomial {
        distance,
        radius_bound,
        curvature: h_mn(distance, ti),
        inside: distance <= radius_bound,
    })
}

/// `slack` defaults to half the minimum true increment.
pub fn region_report_on(
    estimate: &OrdinalParams,
    truth: &OrdinalParams,
    ti: &TheoryInputs,
    slack: Option<f64>,
) -> Result<RegionReport> {
    if estimate.p() != truth.p() || estimate.k() != truth.k() {
        return Err(Error::DimensionMismatch("estimate and truth differ in shape".into()));
    }
    let p = truth.p();
    let d: Vec<f64> = estimate.as_slice().iter().zip(truth.as_slice()).map(|(a, b)| a - b).collect();
    let regression_l1: f64 = d[..p].iter().map(|v| v.abs()).sum();
    let offsets_l1: f64 = d[p..].iter().map(|v| v.abs()).sum();
    let min_increment_change = d[p + 1..].iter().copied().reduce(f64::min);
    let r_star = ti.increment().unwrap_or(f64::INFINITY);
    let slack = slack.unwrap_or(if r_star.is_finite() { r_star / 2.0 } else { 0.5 });
    let (radius_bound, curvature) = if r_star.is_finite() {
        let big = regression_l1.max(offsets_l1);
        (r0_bound_on(slack, ti)?, h_on(big, slack, ti)?)
    } else {
        (f64::NAN, f64::NAN)
    };
    let inside = regression_l1 <= radius_bound
        && offsets_l1 <= radius_bound
        && min_increment_change.is_none_or(|m| m >= -slack);
    Ok(RegionReport::Ordinal {
        regression_l1,
        offsets_l1,
        min_increment_change,
        slack,
        radius_bound,
        curvature,
        inside,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn unit(k: usize) -> CaseControlRatios {
        CaseControlRatios::new(vec![1.0; k]).unwrap()
    }

    #[test]
    fn examples() {
        let ti = TheoryInputs::new(1.0, 0.0, Some(1.0), unit(2)).unwrap();
        assert_relative_eq!(h_mn(0.0, &ti), 1.0 / 108.0, epsilon = 1e-15);
        assert_relative_eq!(r0_bound_mn(&ti), 0.0019073486328125, epsilon = 1e-15);
        assert_relative_eq!(h_on(0.0, 0.0, &ti).unwrap(), 4.0, epsilon = 1e-15);
        assert!(matches!(h_on(0.0, 1.0, &ti), Err(Error::InvalidRegion(_))));
        assert!(r0_bound_on(1.0, &ti).is_err());
        assert!(r0_bound_on(0.0, &ti).is_err());
    }

    #[test]
    fn ordinal_radius_oracle() {
        let cases = [
            (1.5, 0.3, 0.9, 0.2, vec![0.8, 1.7], 2.7591144739923010766e-10),
            (0.7, 1.1, 0.4, 0.35, vec![2.5, 0.6, 1.2], 4.5787169608621251213e-17),
            (2.0, 0.0, 2.0, 1.0, vec![100.0], 6.8820116056930456029e-6),
        ];
        for (cx, rs, inc, slack, kap, want) in cases {
            let ti = TheoryInputs::new(cx, rs, Some(inc), CaseControlRatios::new(kap).unwrap()).unwrap();
            assert_relative_eq!(r0_bound_on(slack, &ti).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn monotone_in_radius() {
        let ti = TheoryInputs::new(1.3, 0.4, Some(0.8), CaseControlRatios::new(vec![0.5, 2.0, 1.0]).unwrap()).unwrap();
        let mut prev = f64::INFINITY;
        let mut prev_on = 0.0;
        for i in 0..50 {
            let r = i as f64 * 0.01;
            assert!(h_mn(r, &ti) < prev);
            prev = h_mn(r, &ti);
            let v = h_on(r, 0.3, &ti).unwrap();
            assert!(v > prev_on);
            prev_on = v;
        }
        let mut prev = 0.0;
        for i in 0..20 {
            let v = h_on(0.1, i as f64 * 0.04, &ti).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let a = r0_bound_on(0.1, &ti).unwrap();
        let b = r0_bound_on(0.7, &ti).unwrap();
        assert!(b < a);
        let bigger = TheoryInputs { param_radius: 0.5, ..ti.clone() };
        assert!(r0_bound_mn(&bigger) < r0_bound_mn(&ti));
    }

    #[test]
    fn region_reports() {
        let truth = MultinomialParams::new(array![[0.5, -0.5], [0.0, 1.0]], array![0.0, 0.0]).unwrap();
        let ti = TheoryInputs::for_multinomial(&truth, 1.0, unit(2)).unwrap();
        assert_eq!(ti.param_radius, 1.5);
        let rep = region_report_mn(&truth, &truth, &ti).unwrap();
        assert!(rep.inside());
        let bound = r0_bound_mn(&ti);
        let mut moved = truth.clone();
        moved.theta[(0, 1)] += 2.0 * bound;
        let rep = region_report_mn(&moved, &truth, &ti).unwrap();
        match rep {
            RegionReport::Multinomial { distance, inside, .. } => {
                assert_relative_eq!(distance, 2.0 * bound, epsilon = 1e-15);
                assert!(!inside);
            }
            _ => unreachable!(),
        }

        let on = crate::params::ordinal_reparam(&array![0.3, -0.2], &[-0.5, 0.5, 1.0]).unwrap();
        let ti = TheoryInputs::for_ordinal(&on, 2.0, unit(3)).unwrap();
        assert_eq!(ti.min_increment, Some(0.5));
        assert!(region_report_on(&on, &on, &ti, None).unwrap().inside());
        let bad = OrdinalParams::new(array![0.3, -0.2, -0.5, 0.1, 0.5], 2).unwrap();
        match region_report_on(&bad, &on, &ti, None).unwrap() {
            RegionReport::Ordinal { offsets_l1, min_increment_change, inside, .. } => {
                assert_relative_eq!(offsets_l1, 0.9, epsilon = 1e-15);
                assert_relative_eq!(min_increment_change.unwrap(), -0.9, epsilon = 1e-15);
                assert!(!inside);
            }
            _ => unreachable!(),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn bound_sweep(cx in 0.1f64..5.0, rs in 0.0f64..3.0, k in 1usize..8,
                       kap in proptest::collection::vec(0.05f64..5.0, 8)) {
            let ratios = CaseControlRatios::new(kap[..k].to_vec()).unwrap();
            let ti = TheoryInputs::new(cx, rs, Some(0.5), ratios).unwrap();
            let r0 = r0_bound_mn(&ti);
            prop_assert!(h_mn(r0, &ti) > 0.0);
            prop_assert!((h_mn(r0, &ti) + 4.0 * cx * r0 - mn_curvature_floor(r0, &ti)).abs() <= 1e-12);
            prop_assert!(h_on(rs, 0.25, &ti).unwrap() >= 1.0);
            if k >= 2 {
                prop_assert!(r0_bound_on(0.25, &ti).unwrap() < 0.01);
            }
        }
    }
}
