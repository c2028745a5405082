//! Parameter containers for the two model families.

use ndarray::{s, Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regression matrix (`p x K`, one column per positive class) and offsets (`K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialParams {
    pub theta: Array2<f64>,
    pub b: Array1<f64>,
}

impl MultinomialParams {
    pub fn new(theta: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        if theta.ncols() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "theta has {} columns but b has length {}",
                theta.ncols(),
                b.len()
            )));
        }
        if theta.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite multinomial parameter".into()));
        }
        Ok(Self { theta, b })
    }

    pub fn zeros(p: usize, k: usize) -> Self {
        Self {
            theta: Array2::zeros((p, k)),
            b: Array1::zeros(k),
        }
    }

    pub fn p(&self) -> usize {
        self.theta.nrows()
    }

    pub fn k(&self) -> usize {
        self.b.len()
    }

    /// Row-major `theta` followed by `b`. The first `p * K` entries form the
    /// penalized coordinate space, with entry `(j, k)` at `j * K + k`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.p() * self.k() + self.k());
        out.extend(self.theta.iter().copied());
        out.extend(self.b.iter().copied());
        out
    }

    pub fn from_flat(flat: &[f64], p: usize, k: usize) -> Result<Self> {
        if flat.len() != p * k + k {
            return Err(Error::DimensionMismatch(format!(
                "flat vector of length {} cannot hold p={p}, K={k}",
                flat.len()
            )));
        }
        let theta = Array2::from_shape_vec((p, k), flat[..p * k].to_vec())
            .expect("shape checked above");
        let b = Array1::from(flat[p * k..].to_vec());
        Ok(Self { theta, b })
    }
}

/// Reparameterized cumulative-logit parameters: `theta[..p]` are the
/// regression coefficients, `theta[p]` is the first cut-point and
/// `theta[p + j]` (`j >= 1`) are the positive cut-point increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOrdinal", into = "RawOrdinal")]
pub struct OrdinalParams {
    theta: Array1<f64>,
    p: usize,
}

#[derive(Serialize, Deserialize)]
struct RawOrdinal {
    theta: Array1<f64>,
    p: usize,
}

impl TryFrom<RawOrdinal> for OrdinalParams {
    type Error = Error;
    fn try_from(r: RawOrdinal) -> Result<Self> {
        Self::new(r.theta, r.p)
    }
}

impl From<OrdinalParams> for RawOrdinal {
    fn from(o: OrdinalParams) -> Self {
        RawOrdinal { theta: o.theta, p: o.p }
    }
}

impl OrdinalParams {
    pub fn new(theta: Array1<f64>, p: usize) -> Result<Self> {
        if theta.len() <= p {
            return Err(Error::DimensionMismatch(format!(
                "ordinal parameter of length {} needs more than p={p} entries",
                theta.len()
            )));
        }
        if let Some(v) = theta.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite ordinal parameter {v}")));
        }
        for j in (p + 1)..theta.len() {
            if theta[j] <= 0.0 {
                return Err(Error::NotIncreasing(j - p));
            }
        }
        Ok(Self { theta, p })
    }

    /// Zero regression part with the given cut-points.
    pub fn intercept_only(p: usize, nu: &[f64]) -> Result<Self> {
        ordinal_reparam(&Array1::zeros(p), nu)
    }

    pub(crate) fn from_flat_unchecked(flat: &[f64], p: usize) -> Self {
        Self {
            theta: Array1::from(flat.to_vec()),
            p,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.theta.len() - self.p
    }

    pub fn theta(&self) -> &Array1<f64> {
        &self.theta
    }

    pub fn as_slice(&self) -> &[f64] {
        self.theta.as_slice().expect("contiguous")
    }

    pub fn beta(&self) -> ArrayView1<'_, f64> {
        self.theta.slice(s![..self.p])
    }

    /// The `K` offset coordinates `theta[p..]`.
    pub fn offsets(&self) -> ArrayView1<'_, f64> {
        self.theta.slice(s![self.p..])
    }

    /// Cut-points recovered by cumulative summation of the offsets.
    pub fn cut_points(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.offsets()
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect()
    }
}

/// Maps `(beta, nu)` with strictly increasing `nu` to the increment form.
pub fn ordinal_reparam(beta: &Array1<f64>, nu: &[f64]) -> Result<OrdinalParams> {
    if nu.is_empty() {
        return Err(Error::DimensionMismatch("at least one cut-point required".into()));
    }
    let p = beta.len();
    let mut theta = Vec::with_capacity(p + nu.len());
    theta.extend(beta.iter().copied());
    theta.push(nu[0]);
    for j in 1..nu.len() {
        if nu[j] <= nu[j - 1] {
            return Err(Error::NotIncreasing(j));
        }
        theta.push(nu[j] - nu[j - 1]);
    }
    OrdinalParams::new(Array1::from(theta), p)
}

/// Inverse of [`ordinal_reparam`].
pub fn ordinal_unreparam(params: &OrdinalParams) -> (Array1<f64>, Vec<f64>) {
    (params.beta().to_owned(), params.cut_points())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn reparam_simple() {
        let t = ordinal_reparam(&array![0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(t.offsets().to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn reparam_increments() {
        let t = ordinal_reparam(&array![0.3], &[-1.5, 0.2, 3.0]).unwrap();
        let off = t.offsets().to_vec();
        assert_eq!(off[0], -1.5);
        assert!((off[1] - 1.7).abs() < 1e-15);
        assert!((off[2] - 2.8).abs() < 1e-15);
        let (beta, nu) = ordinal_unreparam(&t);
        assert_eq!(beta, array![0.3]);
        for (a, b) in nu.iter().zip([-1.5, 0.2, 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn reparam_rejects_non_increasing() {
        assert_eq!(
            ordinal_reparam(&array![0.0], &[0.0, 0.0]).unwrap_err(),
            Error::NotIncreasing(1)
        );
        assert!(OrdinalParams::new(array![0.0, 0.0, -1.0], 1).is_err());
    }

    #[test]
    fn mn_flat_round_trip() {
        let p = MultinomialParams::new(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], array![7.0, 8.0])
            .unwrap();
        let flat = p.to_flat();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(MultinomialParams::from_flat(&flat, 3, 2).unwrap(), p);
    }

    proptest::proptest! {
        #[test]
        fn reparam_round_trip(beta in proptest::collection::vec(-5.0f64..5.0, 1..6),
                              start in -5.0f64..5.0,
                              incs in proptest::collection::vec(0.01f64..3.0, 0..5)) {
            let mut nu = vec![start];
            for d in &incs { let last = *nu.last().unwrap(); nu.push(last + d); }
            let t = ordinal_reparam(&Array1::from(beta.clone()), &nu).unwrap();
            let (b2, nu2) = ordinal_unreparam(&t);
            proptest::prop_assert_eq!(b2.to_vec(), beta);
            for (a, b) in nu.iter().zip(nu2.iter()) {
                proptest::prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }
}
