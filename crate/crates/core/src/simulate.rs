//! Synthetic PU data: sparse true parameters, Gaussian covariates, model
//! labels, case-control subsampling and single-training masking.
//!
//! Every component draws from its own stream of a seeded ChaCha8
//! generator, so changing one stage never perturbs another.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{PUDataset, Scenario};
use crate::error::{Error, Result};
use crate::math::{CaseControlRatios, SingleTrainingProbs};
use crate::models::ModelParams;
use crate::params::{ordinal_reparam, MultinomialParams, OrdinalParams};

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Truth = 1,
    Covariates = 2,
    Labels = 3,
    Masking = 4,
    Prevalence = 5,
    TestSet = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Class probabilities the intercept-only model should reproduce at `x = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptTarget {
    /// Every class, including class 0, equally likely.
    Balanced,
    /// Total positive prevalence, split evenly over the positive classes.
    PositiveShare(f64),
    /// Explicit probabilities of classes `0..=K`.
    Prevalence(Vec<f64>),
}

impl InterceptTarget {
    /// Probabilities of classes `0..=K`.
    pub fn class_probs(&self, k: usize) -> Result<Vec<f64>> {
        let probs = match self {
            InterceptTarget::Balanced => vec![1.0 / (k + 1) as f64; k + 1],
            InterceptTarget::PositiveShare(s) => {
                if !(*s > 0.0 && *s < 1.0) {
                    return Err(Error::InvalidConfig(format!("positive share must lie in (0, 1), got {s}")));
                }
                let mut v = vec![s / k as f64; k + 1];
                v[0] = 1.0 - s;
                v
            }
            InterceptTarget::Prevalence(v) => v.clone(),
        };
        if probs.len() != k + 1 {
            return Err(Error::LengthMismatch { left: k + 1, right: probs.len() });
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|q| !(*q > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("class probabilities {probs:?} must be positive and sum to 1")));
        }
        Ok(probs)
    }
}

/// How the observed labels are produced from the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    CaseControl { n_unlabeled: usize, n_labeled: Vec<usize> },
    SingleTraining { pi_st: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    /// Number of active groups in the truth.
    pub s: usize,
    #[serde(default = "default_sd")]
    pub covariate_sd: f64,
    /// Magnitude range of nonzero coefficients; signs are symmetric.
    #[serde(default = "default_range")]
    pub nonzero_range: (f64, f64),
    #[serde(default)]
    pub seed: u64,
    pub design: Design,
    #[serde(default = "default_target")]
    pub intercepts: InterceptTarget,
}

fn default_sd() -> f64 {
    1.0
}
fn default_range() -> (f64, f64) {
    (0.5, 1.0)
}
fn default_target() -> InterceptTarget {
    InterceptTarget::Balanced
}

impl SimConfig {
    /// Case-control design with half the rows unlabeled and the rest split
    /// as evenly as possible over the positive classes.
    pub fn case_control(n: usize, p: usize, k: usize, s: usize, seed: u64) -> Self {
        let n_u = n / 2;
        let rest = n - n_u;
        let n_labeled = (0..k).map(|j| rest / k + usize::from(j < rest % k)).collect();
        Self {
            n,
            p,
            k,
            s,
            covariate_sd: 1.0,
            nonzero_range: default_range(),
            seed,
            design: Design::CaseControl { n_unlabeled: n_u, n_labeled },
            intercepts: InterceptTarget::Balanced,
        }
    }

    pub fn single_training(n: usize, p: usize, k: usize, s: usize, pi_st: Vec<f64>, seed: u64) -> Self {
        Self {
            design: Design::SingleTraining { pi_st },
            ..Self::case_control(n, p, k, s, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 || self.p == 0 || self.k == 0 {
            return bad(format!("n, p and k must be positive (got {}, {}, {})", self.n, self.p, self.k));
        }
        if self.s > self.p {
            return bad(format!("s = {} exceeds the number of groups {}", self.s, self.p));
        }
        if !(self.covariate_sd > 0.0 && self.covariate_sd.is_finite()) {
            return bad(format!("covariate_sd must be positive, got {}", self.covariate_sd));
        }
        let (lo, hi) = self.nonzero_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("nonzero_range ({lo}, {hi}) must satisfy 0 < lo <= hi"));
        }
        match &self.design {
            Design::CaseControl { n_unlabeled, n_labeled } => {
                if n_labeled.len() != self.k {
                    return Err(Error::LengthMismatch { left: self.k, right: n_labeled.len() });
                }
                if n_unlabeled + n_labeled.iter().sum::<usize>() != self.n {
                    return bad("n_unlabeled plus labeled counts must equal n".into());
                }
                if *n_unlabeled == 0 {
                    return bad("case-control design needs unlabeled rows".into());
                }
            }
            Design::SingleTraining { pi_st } => {
                SingleTrainingProbs::new(pi_st.clone())?;
                if pi_st.len() != self.k {
                    return Err(Error::LengthMismatch { left: self.k, right: pi_st.len() });
                }
            }
        }
        self.intercepts.class_probs(self.k).map(|_| ())
    }
}

fn draw_nonzero(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let mag = if hi > lo { rng.random_range(lo..hi) } else { lo };
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Sparse multinomial truth: `s` random rows of the regression matrix are
/// active, with every entry drawn from `±[lo, hi]`.
pub fn gen_mn_truth(cfg: &SimConfig) -> Result<MultinomialParams> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, Stream::Truth);
    let mut theta = Array2::zeros((cfg.p, cfg.k));
    for row in sorted_support(&mut rng, cfg.p, cfg.s) {
        for j in 0..cfg.k {
            theta[(row, j)] = draw_nonzero(&mut rng, cfg.nonzero_range);
        }
    }
    let q = cfg.intercepts.class_probs(cfg.k)?;
    let b = Array1::from_iter(q[1..].iter().map(|qk| (qk / q[0]).ln()));
    MultinomialParams::new(theta, b)
}

/// Sparse ordinal truth with `s` active coefficients.
pub fn gen_on_truth(cfg: &SimConfig) -> Result<OrdinalParams> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, Stream::Truth);
    let mut beta = Array1::zeros(cfg.p);
    for j in sorted_support(&mut rng, cfg.p, cfg.s) {
        beta[j] = draw_nonzero(&mut rng, cfg.nonzero_range);
    }
    let q = cfg.intercepts.class_probs(cfg.k)?;
    let mut cum = 0.0;
    let nu: Vec<f64> = q[..cfg.k]
        .iter()
        .map(|qj| {
            cum += qj;
            (cum / (1.0 - cum)).ln()
        })
        .collect();
    ordinal_reparam(&beta, &nu)
}

fn sorted_support(rng: &mut ChaCha8Rng, p: usize, s: usize) -> Vec<usize> {
    let mut idx = sample(rng, p, s).into_vec();
    idx.sort_unstable();
    idx
}

pub fn gen_mn_truth_params(cfg: &SimConfig) -> Result<ModelParams> {
    gen_mn_truth(cfg).map(ModelParams::Multinomial)
}

pub fn gen_on_truth_params(cfg: &SimConfig) -> Result<ModelParams> {
    gen_on_truth(cfg).map(ModelParams::Ordinal)
}

/// `n x p` matrix of i.i.d. `N(0, covariate_sd^2)` entries.
pub fn gen_covariates(cfg: &SimConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, Stream::Covariates);
    Ok(gaussian_matrix(&mut rng, cfg.n, cfg.p, cfg.covariate_sd))
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize, sd: f64) -> Array2<f64> {
    let normal = Normal::new(0.0, sd).expect("sd validated");
    Array2::from_shape_simple_fn((n, p), || normal.sample(rng))
}

fn draw_class<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, q) in probs.iter().enumerate() {
        acc += q;
        if u < acc {
            return j;
        }
    }
    // rounding left a sliver above the last cumulative value
    probs.iter().rposition(|q| *q > 0.0).unwrap_or(0)
}

/// Draws one label per row of `x` from the model's class distribution.
pub fn sample_labels<R: Rng + ?Sized>(truth: &ModelParams, x: &Array2<f64>, rng: &mut R) -> Result<Vec<usize>> {
    x.rows()
        .into_iter()
        .map(|row| truth.predict_proba(row).map(|pr| draw_class(rng, &pr)))
        .collect()
}

/// Population class prevalences, averaged over `draws` covariate vectors.
/// Only the covariates with a nonzero coefficient are drawn.
pub fn estimate_prevalence(truth: &ModelParams, sd: f64, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, Stream::Prevalence);
    let reduced = active_submodel(truth);
    let p = reduced.p();
    let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut acc = vec![0.0; truth.k() + 1];
    let mut row = vec![0.0; p];
    for _ in 0..draws.max(1) {
        for v in &mut row {
            *v = normal.sample(&mut rng);
        }
        for (a, q) in acc.iter_mut().zip(reduced.predict_proba(ArrayView1::from(&row))?) {
            *a += q;
        }
    }
    Ok(acc.into_iter().map(|a| a / draws.max(1) as f64).collect())
}

/// The same model restricted to covariates with a nonzero coefficient. At
/// least one (zero) column is kept so the model stays well formed.
fn active_submodel(truth: &ModelParams) -> ModelParams {
    match truth {
        ModelParams::Multinomial(m) => {
            let rows: Vec<usize> = (0..m.p()).filter(|&i| m.theta.row(i).iter().any(|v| *v != 0.0)).collect();
            let mut theta = Array2::zeros((rows.len().max(1), m.k()));
            for (r, &i) in rows.iter().enumerate() {
                theta.row_mut(r).assign(&m.theta.row(i));
            }
            ModelParams::Multinomial(MultinomialParams::new(theta, m.b.clone()).expect("finite"))
        }
        ModelParams::Ordinal(o) => {
            let beta: Vec<f64> = o.beta().iter().copied().filter(|v| *v != 0.0).collect();
            let p = beta.len().max(1);
            let mut flat = vec![0.0; p];
            flat[..beta.len()].copy_from_slice(&beta);
            flat.extend(o.offsets().iter());
            ModelParams::Ordinal(OrdinalParams::from_flat_unchecked(&flat, p))
        }
    }
}

/// Size of the auxiliary draw used to estimate prevalences.
pub fn prevalence_draws(n: usize) -> usize {
    (100 * n).max(100_000)
}

const MIN_PREVALENCE: f64 = 1e-4;

/// Case-control sample: `n_unlabeled` population rows with `z = 0`, then
/// `n_labeled[j-1]` rows with `z = j` drawn by rejection from class `j`.
/// The hidden labels are kept in `y`, and the ratios use prevalences
/// estimated from an auxiliary draw.
pub fn case_control_sample(truth: &ModelParams, cfg: &SimConfig) -> Result<PUDataset> {
    cfg.validate()?;
    check_truth(truth, cfg)?;
    let Design::CaseControl { n_unlabeled, n_labeled } = &cfg.design else {
        return Err(Error::InvalidConfig("case_control_sample needs a case-control design".into()));
    };
    let prevalence = estimate_prevalence(truth, cfg.covariate_sd, prevalence_draws(cfg.n), cfg.seed)?;
    for (j, &q) in prevalence.iter().enumerate() {
        if q < MIN_PREVALENCE {
            return Err(Error::RejectionStall { class: j, prevalence: q });
        }
    }
    let mut rng = stream_rng(cfg.seed, Stream::Labels);
    let normal = Normal::new(0.0, cfg.covariate_sd).expect("sd validated");
    let mut x = Array2::zeros((cfg.n, cfg.p));
    let mut y = Vec::with_capacity(cfg.n);
    let mut z = Vec::with_capacity(cfg.n);
    let mut row = Array1::zeros(cfg.p);
    let draw = |row: &mut Array1<f64>, rng: &mut ChaCha8Rng| -> Result<usize> {
        row.mapv_inplace(|_| normal.sample(rng));
        Ok(draw_class(rng, &truth.predict_proba(row.view())?))
    };
    for _ in 0..*n_unlabeled {
        let label = draw(&mut row, &mut rng)?;
        x.row_mut(z.len()).assign(&row);
        y.push(label);
        z.push(0);
    }
    for (j, &count) in n_labeled.iter().enumerate() {
        let class = j + 1;
        // generous cap: the expected number of tries is count / prevalence
        let cap = ((count as f64 / prevalence[class]) * 50.0) as usize + 10_000;
        let mut tries = 0;
        let mut got = 0;
        while got < count {
            tries += 1;
            if tries > cap {
                return Err(Error::RejectionStall { class, prevalence: prevalence[class] });
            }
            if draw(&mut row, &mut rng)? == class {
                x.row_mut(z.len()).assign(&row);
                y.push(class);
                z.push(class);
                got += 1;
            }
        }
    }
    let ratios = CaseControlRatios::from_design(n_labeled, &prevalence[1..], *n_unlabeled)?;
    PUDataset::new(x, z, Scenario::CaseControl(ratios), Some(y))
}

/// Keeps each positive label with probability `keep[y - 1]`; class 0 and
/// masked positives become 0. Probabilities may include the endpoints.
pub fn single_training_mask(y: &[usize], keep: &[f64], seed: u64) -> Result<Vec<usize>> {
    if let Some(q) = keep.iter().find(|q| !(**q >= 0.0 && **q <= 1.0)) {
        return Err(Error::InvalidProbabilities(format!("keep probability {q} outside [0, 1]")));
    }
    let mut rng = stream_rng(seed, Stream::Masking);
    y.iter()
        .enumerate()
        .map(|(row, &label)| match label {
            0 => Ok(0),
            l if l <= keep.len() => Ok(if rng.random::<f64>() < keep[l - 1] { l } else { 0 }),
            l => Err(Error::LabelOutOfRange { row, label: l, k: keep.len() }),
        })
        .collect()
}

/// Single-training sample: `n` population rows whose positive labels are
/// kept with probability `pi_st`.
pub fn single_training_sample(truth: &ModelParams, cfg: &SimConfig) -> Result<PUDataset> {
    cfg.validate()?;
    check_truth(truth, cfg)?;
    let Design::SingleTraining { pi_st } = &cfg.design else {
        return Err(Error::InvalidConfig("single_training_sample needs a single-training design".into()));
    };
    let x = gen_covariates(cfg)?;
    let y = sample_labels(truth, &x, &mut stream_rng(cfg.seed, Stream::Labels))?;
    let z = single_training_mask(&y, pi_st, cfg.seed)?;
    let probs = SingleTrainingProbs::new(pi_st.clone())?;
    PUDataset::new(x, z, Scenario::SingleTraining(probs), Some(y))
}

/// Dispatches on the design.
pub fn simulate_dataset(truth: &ModelParams, cfg: &SimConfig) -> Result<PUDataset> {
    match cfg.design {
        Design::CaseControl { .. } => case_control_sample(truth, cfg),
        Design::SingleTraining { .. } => single_training_sample(truth, cfg),
    }
}

/// Fresh population rows with their labels, for measuring test error.
pub fn test_sample(truth: &ModelParams, n_test: usize, sd: f64, seed: u64) -> Result<(Array2<f64>, Vec<usize>)> {
    if !(sd > 0.0) {
        return Err(Error::InvalidConfig(format!("covariate sd must be positive, got {sd}")));
    }
    let mut rng = stream_rng(seed, Stream::TestSet);
    let x = gaussian_matrix(&mut rng, n_test, truth.p(), sd);
    let y = sample_labels(truth, &x, &mut rng)?;
    Ok((x, y))
}

fn check_truth(truth: &ModelParams, cfg: &SimConfig) -> Result<()> {
    if truth.p() != cfg.p || truth.k() != cfg.k {
        return Err(Error::DimensionMismatch(format!(
            "truth is p={}, K={} but the config asks for p={}, K={}",
            truth.p(),
            truth.k(),
            cfg.p,
            cfg.k
        )));
    }
    Ok(())
}
