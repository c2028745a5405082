use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{CaseControlRatios, SingleTrainingProbs};

/// How the positive labels were observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Labeled samples drawn per positive class, unlabeled from the population.
    CaseControl(CaseControlRatios),
    /// One population sample; positives keep their label with the given probability.
    SingleTraining(SingleTrainingProbs),
}

impl Scenario {
    pub fn k(&self) -> usize {
        match self {
            Scenario::CaseControl(r) => r.k(),
            Scenario::SingleTraining(p) => p.k(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::CaseControl(_) => "case_control",
            Scenario::SingleTraining(_) => "single_training",
        }
    }
}

/// Covariates, observed labels in `0..=K` (0 means unlabeled), the
/// observation scenario and, for simulated data, the hidden true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PUDataset {
    x: Array2<f64>,
    z: Vec<usize>,
    scenario: Scenario,
    y: Option<Vec<usize>>,
}

impl PUDataset {
    pub fn new(x: Array2<f64>, z: Vec<usize>, scenario: Scenario, y: Option<Vec<usize>>) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 || p == 0 {
            return Err(Error::DimensionMismatch(format!("empty covariate matrix {n}x{p}")));
        }
        if z.len() != n {
            return Err(Error::LengthMismatch { left: n, right: z.len() });
        }
        if let Some(row) = x.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidConfig(format!("non-finite covariate in row {row}")));
        }
        let k = scenario.k();
        check_labels(&z, k)?;
        if let Some(y) = &y {
            if y.len() != n {
                return Err(Error::LengthMismatch { left: n, right: y.len() });
            }
            check_labels(y, k)?;
        }
        let data = Self { x, z, scenario, y };
        if let Scenario::CaseControl(_) = data.scenario {
            for (class, count) in data.label_counts().iter().enumerate().skip(1) {
                if *count == 0 {
                    log::warn!("positive class {class} has no labeled samples");
                }
            }
        }
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.scenario.k()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn y(&self) -> Option<&[usize]> {
        self.y.as_deref()
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Same rows with a different scenario, e.g. a misspecified labeling probability.
    pub fn with_scenario(&self, scenario: Scenario) -> Result<Self> {
        Self::new(self.x.clone(), self.z.clone(), scenario, self.y.clone())
    }

    /// Counts of each observed label `0..=K`.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k() + 1];
        for &z in &self.z {
            counts[z] += 1;
        }
        counts
    }

    /// Rows at the given indices, in order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n()) {
            return Err(Error::IndexOutOfRange { index: bad, len: self.n() });
        }
        Self::new(
            self.x.select(Axis(0), idx),
            idx.iter().map(|&i| self.z[i]).collect(),
            self.scenario.clone(),
            self.y.as_ref().map(|y| idx.iter().map(|&i| y[i]).collect()),
        )
    }
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    match labels.iter().position(|&l| l > k) {
        Some(row) => Err(Error::LabelOutOfRange { row, label: labels[row], k }),
        None => Ok(()),
    }
}
