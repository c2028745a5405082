use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{misclassification_rate, pred_mse, Estimator};
use crate::data::PUDataset;
use crate::error::{Error, Result};
use crate::models::ModelParams;
use crate::optimizer::GroupStructure;

/// What a held-out fold is scored by. Label metrics compare predictions
/// with the observed labels, which are all that real PU data provides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMetric {
    /// The estimator's own unpenalized loss.
    #[default]
    HeldoutLoss,
    Misclassification,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CVPlan {
    pub folds: usize,
    /// Strictly descending penalty levels.
    pub lambda_grid: Vec<f64>,
    #[serde(default)]
    pub metric: CvMetric,
    #[serde(default)]
    pub seed: u64,
}

impl CVPlan {
    pub fn new(lambda_grid: Vec<f64>, seed: u64) -> Self {
        Self { folds: 5, lambda_grid, metric: CvMetric::HeldoutLoss, seed }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidPlan(format!("need at least 2 folds, got {}", self.folds)));
        }
        if n < self.folds {
            return Err(Error::InvalidPlan(format!("{n} rows cannot fill {} folds", self.folds)));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidPlan("empty lambda grid".into()));
        }
        if self.lambda_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidPlan("lambda values must be positive and finite".into()));
        }
        if self.lambda_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidPlan("lambda grid must be strictly descending".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    /// Mean held-out metric over folds; `inf` if any fold failed.
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_lambda: f64,
    pub best_index: usize,
    pub curve: Vec<CvPoint>,
}

/// Fold index of every row. Rows are shuffled within each observed label
/// and dealt round-robin, so each fold sees every label in proportion.
pub fn fold_assignment(z: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = z.iter().copied().max().unwrap_or(0);
    let mut out = vec![0; z.len()];
    let mut next = 0;
    for label in 0..=k {
        let mut idx: Vec<usize> = (0..z.len()).filter(|&i| z[i] == label).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            out[i] = next % folds;
            next += 1;
        }
    }
    out
}

fn score(est: &Estimator, metric: CvMetric, params: &ModelParams, held: &PUDataset) -> Result<f64> {
    match metric {
        CvMetric::HeldoutLoss => est.loss(params, held),
        CvMetric::Misclassification => misclassification_rate(&params.predict_labels(held.x().view())?, held.z()),
        CvMetric::Mse => pred_mse(&params.predict_labels(held.x().view())?, held.z()),
    }
}

/// Scores of one fold along the warm-started descending path.
fn fold_path(
    data: &PUDataset,
    assign: &[usize],
    fold: usize,
    gs: &GroupStructure,
    est: &Estimator,
    plan: &CVPlan,
) -> Result<Vec<f64>> {
    let (train, held): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|&i| assign[i] != fold);
    let train = data.subset(&train)?;
    let held = data.subset(&held)?;
    let mut warm: Option<ModelParams> = None;
    let mut scores = Vec::with_capacity(plan.lambda_grid.len());
    for &lambda in &plan.lambda_grid {
        match est.fit(&train, gs, lambda, warm.as_ref()) {
            Ok(fit) => {
                let s = score(est, plan.metric, &fit.params, &held)?;
                scores.push(if s.is_finite() { s } else { f64::INFINITY });
                warm = Some(fit.params);
            }
            Err(Error::NonFinite(_)) => {
                log::warn!("fold {fold}: fit at lambda {lambda:.3e} diverged");
                scores.push(f64::INFINITY);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(scores)
}

/// K-fold cross-validation over a descending penalty path. Returns the
/// penalty with the smallest mean held-out metric; ties go to the larger
/// penalty.
pub fn kfold_cv(data: &PUDataset, gs: &GroupStructure, est: &Estimator, plan: &CVPlan) -> Result<CvResult> {
    plan.validate(data.n())?;
    let assign = fold_assignment(data.z(), plan.folds, plan.seed);
    let per_fold: Vec<Vec<f64>> = (0..plan.folds)
        .into_par_iter()
        .map(|f| fold_path(data, &assign, f, gs, est, plan))
        .collect::<Result<_>>()?;
    let folds = plan.folds as f64;
    let curve: Vec<CvPoint> = plan
        .lambda_grid
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let vals: Vec<f64> = per_fold.iter().map(|s| s[j]).collect();
            let mean = vals.iter().sum::<f64>() / folds;
            let se = if mean.is_finite() {
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (folds - 1.0);
                (var / folds).sqrt()
            } else {
                f64::INFINITY
            };
            CvPoint { lambda, mean, se }
        })
        .collect();
    let mut best_index = 0;
    for (j, pt) in curve.iter().enumerate().skip(1) {
        if pt.mean < curve[best_index].mean {
            best_index = j;
        }
    }
    Ok(CvResult { best_lambda: curve[best_index].lambda, best_index, curve })
}
