use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    kfold_cv, lambda_grid, misclassification_rate, pred_mse, CVPlan, CvMetric, CvResult, Estimator, ExperimentReport, Method,
    RateFit, Record,
};
use crate::data::{PUDataset, Scenario};
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelParams};
use crate::optimizer::FitResult;
use crate::simulate::{
    gen_mn_truth_params, gen_on_truth_params, simulate_dataset, test_sample, Design, InterceptTarget, SimConfig,
};

/// Decorrelated seed for one replicate of one cell.
fn replicate_seed(seed: u64, cell: usize, rep: usize) -> u64 {
    let mut z = seed ^ (cell as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (rep as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gen_truth(model: ModelKind, cfg: &SimConfig) -> Result<ModelParams> {
    match model {
        ModelKind::Multinomial => gen_mn_truth_params(cfg),
        ModelKind::Ordinal => gen_on_truth_params(cfg),
    }
}

/// Frobenius distance of the regression matrices (multinomial) or
/// Euclidean distance of the full parameter vectors (ordinal).
fn estimation_error(est: &ModelParams, truth: &ModelParams) -> f64 {
    let (a, b): (Vec<f64>, Vec<f64>) = match (est, truth) {
        (ModelParams::Multinomial(e), ModelParams::Multinomial(t)) => {
            (e.theta.iter().copied().collect(), t.theta.iter().copied().collect())
        }
        (ModelParams::Ordinal(e), ModelParams::Ordinal(t)) => (e.as_slice().to_vec(), t.as_slice().to_vec()),
        _ => return f64::NAN,
    };
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn prediction_error(model: ModelKind, params: &ModelParams, x: &Array2<f64>, y: &[usize]) -> Result<f64> {
    let pred = params.predict_labels(x.view())?;
    match model {
        ModelKind::Multinomial => misclassification_rate(&pred, y),
        ModelKind::Ordinal => pred_mse(&pred, y),
    }
}

/// Positive-class prevalence implied by the case-control ratios.
fn implied_prevalence(data: &PUDataset, cfg: &SimConfig) -> Option<f64> {
    match (data.scenario(), &cfg.design) {
        (Scenario::CaseControl(r), Design::CaseControl { n_unlabeled, n_labeled }) => Some(
            n_labeled
                .iter()
                .zip(r.as_slice())
                .map(|(&nk, kap)| nk as f64 / (kap * *n_unlabeled as f64))
                .sum(),
        ),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingCell {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub k: usize,
}

/// `sqrt(s (log p + K) / n)` for the multinomial model and
/// `sqrt(s log p / n)` for the ordinal model.
pub fn theoretical_rate(model: ModelKind, cell: &ScalingCell) -> f64 {
    let (n, p, s, k) = (cell.n as f64, cell.p as f64, cell.s as f64, cell.k as f64);
    match model {
        ModelKind::Multinomial => (s * (p.ln() + k) / n).sqrt(),
        ModelKind::Ordinal => (s * p.ln() / n).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingPlan {
    pub model: ModelKind,
    pub cells: Vec<ScalingCell>,
    pub replicates: usize,
    /// Constant `c` in `lambda = c * sqrt(log p / n)`. When absent it is
    /// calibrated per `(s, K)` from `calibration_grid`.
    #[serde(default)]
    pub lambda_const: Option<f64>,
    #[serde(default = "default_calibration")]
    pub calibration_grid: Vec<f64>,
    #[serde(default = "default_pilots")]
    pub calibration_replicates: usize,
    #[serde(default = "one")]
    pub covariate_sd: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
}

fn default_calibration() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4, 0.8]
}
fn default_pilots() -> usize {
    3
}
fn one() -> f64 {
    1.0
}

fn scaling_run(plan: &ScalingPlan, cell: &ScalingCell, c: f64, seed: u64) -> Result<(f64, f64)> {
    let mut cfg = SimConfig::case_control(cell.n, cell.p, cell.k, cell.s, seed);
    cfg.covariate_sd = plan.covariate_sd;
    let truth = gen_truth(plan.model, &cfg)?;
    let data = simulate_dataset(&truth, &cfg)?;
    let est = Estimator::new(plan.model, plan.method);
    let gs = est.groups(&data);
    let lambda = c * ((cell.p as f64).ln() / cell.n as f64).sqrt();
    let start = Instant::now();
    let fit = est.fit(&data, &gs, lambda, None)?;
    Ok((estimation_error(&fit.params, &truth), start.elapsed().as_secs_f64()))
}

/// Picks the constant with the smallest mean estimation error on pilot
/// replicates of `cell`. Pilot seeds never coincide with the main runs.
pub fn calibrate_lambda_const(plan: &ScalingPlan, cell: &ScalingCell) -> Result<f64> {
    if plan.calibration_grid.is_empty() || plan.calibration_replicates == 0 {
        return Err(Error::InvalidPlan("calibration needs candidates and pilot replicates".into()));
    }
    let scores: Vec<f64> = plan
        .calibration_grid
        .par_iter()
        .map(|&c| {
            let mut total = 0.0;
            for rep in 0..plan.calibration_replicates {
                total += scaling_run(plan, cell, c, replicate_seed(!plan.seed, usize::MAX, rep))?.0;
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    let best = (0..scores.len()).fold(0, |b, i| if scores[i] < scores[b] { i } else { b });
    Ok(plan.calibration_grid[best])
}

/// Estimation error against the theoretical rate over a grid of
/// `(n, p, s, K)` cells, with a through-origin fit of mean error on rate.
pub fn scaling_experiment(plan: &ScalingPlan) -> Result<ExperimentReport> {
    if plan.cells.is_empty() || plan.replicates == 0 {
        return Err(Error::InvalidPlan("scaling experiment needs cells and replicates".into()));
    }
    let mut consts = Vec::with_capacity(plan.cells.len());
    let mut chosen: Vec<((usize, usize), f64)> = Vec::new();
    for cell in &plan.cells {
        let c = match plan.lambda_const {
            Some(c) => c,
            None => match chosen.iter().find(|(key, _)| *key == (cell.s, cell.k)) {
                Some((_, c)) => *c,
                None => {
                    let c = calibrate_lambda_const(plan, cell)?;
                    log::info!("calibrated lambda constant {c} for s={}, K={}", cell.s, cell.k);
                    chosen.push(((cell.s, cell.k), c));
                    c
                }
            },
        };
        consts.push(c);
    }
    let jobs: Vec<(usize, usize)> = (0..plan.cells.len())
        .flat_map(|c| (0..plan.replicates).map(move |r| (c, r)))
        .collect();
    let label = plan.method.to_string();
    let records: Vec<Record> = jobs
        .par_iter()
        .map(|&(ci, rep)| {
            let cell = &plan.cells[ci];
            let (error, secs) = scaling_run(plan, cell, consts[ci], replicate_seed(plan.seed, ci, rep))?;
            Ok(Record {
                cell: ci,
                setting: format!("n={},p={},s={},k={},c={}", cell.n, cell.p, cell.s, cell.k, consts[ci]),
                x: theoretical_rate(plan.model, cell),
                replicate: rep,
                estimator: label.clone(),
                error,
                prevalence: None,
                runtime_secs: secs,
            })
        })
        .collect::<Result<_>>()?;
    let mut report = ExperimentReport::new("scaling", records);
    let (xs, ys): (Vec<f64>, Vec<f64>) = report.summaries.iter().map(|s| (s.x, s.mean)).unzip();
    report.rate_fits.push(RateFit::through_origin(&label, &xs, &ys));
    Ok(report)
}

/// What a comparison study varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Target positive prevalence of the intercept-only model.
    Prevalence(Vec<f64>),
    /// Fraction of rows that are unlabeled; positives split evenly.
    UnlabeledFraction(Vec<f64>),
}

impl Sweep {
    fn values(&self) -> &[f64] {
        match self {
            Sweep::Prevalence(v) | Sweep::UnlabeledFraction(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonPlan {
    pub model: ModelKind,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub k: usize,
    #[serde(default = "two")]
    pub covariate_sd: f64,
    pub sweep: Sweep,
    pub replicates: usize,
    #[serde(default = "hundred")]
    pub test_size: usize,
    #[serde(default = "five")]
    pub folds: usize,
    #[serde(default = "thirty")]
    pub grid_len: usize,
    #[serde(default = "thousandth")]
    pub grid_ratio: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
}

fn two() -> f64 {
    2.0
}
fn hundred() -> usize {
    100
}
fn five() -> usize {
    5
}
fn thirty() -> usize {
    30
}
fn thousandth() -> f64 {
    1e-3
}

/// Cross-validates over a grid anchored at the estimator's own
/// `lambda_max`, then refits on all rows at the selected penalty.
pub fn cv_fit(
    data: &PUDataset,
    est: &Estimator,
    folds: usize,
    grid_len: usize,
    grid_ratio: f64,
    seed: u64,
) -> Result<(FitResult<ModelParams>, CvResult)> {
    let gs = est.groups(data);
    let lmax = est.lambda_max(data, &gs)?;
    let grid = lambda_grid(lmax, grid_len, grid_ratio)?;
    let plan = CVPlan { folds, lambda_grid: grid, metric: CvMetric::HeldoutLoss, seed };
    let cv = kfold_cv(data, &gs, est, &plan)?;
    Ok((est.fit(data, &gs, cv.best_lambda, None)?, cv))
}

fn comparison_cell_cfg(plan: &ComparisonPlan, value: f64, seed: u64) -> Result<SimConfig> {
    let mut cfg = SimConfig::case_control(plan.n, plan.p, plan.k, plan.s, seed);
    cfg.covariate_sd = plan.covariate_sd;
    match plan.sweep {
        Sweep::Prevalence(_) => cfg.intercepts = InterceptTarget::PositiveShare(value),
        Sweep::UnlabeledFraction(_) => {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidPlan(format!("unlabeled fraction {value} outside (0, 1)")));
            }
            let n_u = ((plan.n as f64) * value).round() as usize;
            let rest = plan.n - n_u;
            let n_labeled = (0..plan.k).map(|j| rest / plan.k + usize::from(j < rest % plan.k)).collect();
            cfg.design = Design::CaseControl { n_unlabeled: n_u, n_labeled };
        }
    }
    Ok(cfg)
}

/// PU estimator against the naive baseline and the true-parameter oracle,
/// scored on fresh test rows. Errors are misclassification rates for the
/// multinomial model and squared rank errors for the ordinal model.
pub fn comparison_experiment(plan: &ComparisonPlan) -> Result<ExperimentReport> {
    let values = plan.sweep.values();
    if values.is_empty() || plan.replicates == 0 {
        return Err(Error::InvalidPlan("comparison needs sweep values and replicates".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|c| (0..plan.replicates).map(move |r| (c, r)))
        .collect();
    let per_job: Vec<Vec<Record>> = jobs
        .par_iter()
        .map(|&(ci, rep)| {
            let seed = replicate_seed(plan.seed, ci, rep);
            let cfg = comparison_cell_cfg(plan, values[ci], seed)?;
            let truth = gen_truth(plan.model, &cfg)?;
            let data = simulate_dataset(&truth, &cfg)?;
            let prevalence = implied_prevalence(&data, &cfg);
            let (xt, yt) = test_sample(&truth, plan.test_size, plan.covariate_sd, seed)?;
            let setting = match plan.sweep {
                Sweep::Prevalence(_) => format!("target_prevalence={}", values[ci]),
                Sweep::UnlabeledFraction(_) => format!("unlabeled_fraction={}", values[ci]),
            };
            let record = |estimator: &str, error: f64, secs: f64| Record {
                cell: ci,
                setting: setting.clone(),
                x: values[ci],
                replicate: rep,
                estimator: estimator.to_string(),
                error,
                prevalence,
                runtime_secs: secs,
            };
            let mut out = Vec::with_capacity(3);
            for (name, method) in [("pu", plan.method), ("naive", Method::Naive)] {
                let start = Instant::now();
                let est = Estimator::new(plan.model, method);
                let (fit, _) = cv_fit(&data, &est, plan.folds, plan.grid_len, plan.grid_ratio, seed)?;
                let err = prediction_error(plan.model, &fit.params, &xt, &yt)?;
                out.push(record(name, err, start.elapsed().as_secs_f64()));
            }
            out.push(record("oracle", prediction_error(plan.model, &truth, &xt, &yt)?, 0.0));
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentReport::new("comparison", per_job.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisspecPlan {
    pub model: ModelKind,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub k: usize,
    /// Labeling probability used to mask the data, shared by all classes.
    pub true_pi: f64,
    /// Labeling probabilities handed to the estimator.
    pub assumed_pi: Vec<f64>,
    pub replicates: usize,
    #[serde(default = "one")]
    pub covariate_sd: f64,
    #[serde(default = "hundred")]
    pub test_size: usize,
    #[serde(default = "five")]
    pub folds: usize,
    #[serde(default = "thirty")]
    pub grid_len: usize,
    #[serde(default = "thousandth")]
    pub grid_ratio: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
}

/// Single-training data masked with `true_pi`, fitted under each assumed
/// labeling probability. One cell per assumed value, sharing data across
/// cells within a replicate.
pub fn misspecification_experiment(plan: &MisspecPlan) -> Result<ExperimentReport> {
    if plan.assumed_pi.is_empty() || plan.replicates == 0 {
        return Err(Error::InvalidPlan("misspecification study needs assumed values and replicates".into()));
    }
    let per_rep: Vec<Vec<Record>> = (0..plan.replicates)
        .into_par_iter()
        .map(|rep| {
            let seed = replicate_seed(plan.seed, 0, rep);
            let mut cfg = SimConfig::single_training(plan.n, plan.p, plan.k, plan.s, vec![plan.true_pi; plan.k], seed);
            cfg.covariate_sd = plan.covariate_sd;
            let truth = gen_truth(plan.model, &cfg)?;
            let data = simulate_dataset(&truth, &cfg)?;
            let (xt, yt) = test_sample(&truth, plan.test_size, plan.covariate_sd, seed)?;
            let est = Estimator::new(plan.model, plan.method);
            plan.assumed_pi
                .iter()
                .enumerate()
                .map(|(ci, &pi_hat)| {
                    let start = Instant::now();
                    let probs = crate::math::SingleTrainingProbs::new(vec![pi_hat; plan.k])?;
                    let assumed = data.with_scenario(Scenario::SingleTraining(probs))?;
                    let (fit, _) = cv_fit(&assumed, &est, plan.folds, plan.grid_len, plan.grid_ratio, seed)?;
                    Ok(Record {
                        cell: ci,
                        setting: format!("true_pi={},assumed_pi={pi_hat}", plan.true_pi),
                        x: pi_hat,
                        replicate: rep,
                        estimator: "pu".into(),
                        error: prediction_error(plan.model, &fit.params, &xt, &yt)?,
                        prevalence: None,
                        runtime_secs: start.elapsed().as_secs_f64(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<Record> = per_rep.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.cell, r.replicate));
    Ok(ExperimentReport::new("misspecification", records))
}
