use std::io::Write;

use serde::{Deserialize, Serialize};

/// One estimator on one replicate of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub cell: usize,
    /// Human-readable description of the cell.
    pub setting: String,
    /// Position of the cell along the sweep (rate, prevalence, ...).
    pub x: f64,
    pub replicate: usize,
    pub estimator: String,
    pub error: f64,
    /// Positive-class prevalence of the simulated population, when known.
    pub prevalence: Option<f64>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cell: usize,
    pub setting: String,
    pub x: f64,
    pub estimator: String,
    pub count: usize,
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub mean_prevalence: Option<f64>,
}

/// Least-squares line through the origin of mean error on `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub estimator: String,
    pub slope: f64,
    /// `1 - SSE / sum(y^2)`, the usual definition for a fit without intercept.
    pub r_squared: f64,
    /// `1 - SSE / sum((y - mean)^2)`, stricter.
    pub r_squared_centered: f64,
}

impl RateFit {
    pub fn through_origin(estimator: &str, xs: &[f64], ys: &[f64]) -> Self {
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
        let slope = sxy / sxx;
        let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x).powi(2)).sum();
        let syy: f64 = ys.iter().map(|y| y * y).sum();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let sst: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
        Self {
            estimator: estimator.to_string(),
            slope,
            r_squared: 1.0 - sse / syy,
            r_squared_centered: 1.0 - sse / sst,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub records: Vec<Record>,
    pub summaries: Vec<Summary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rate_fits: Vec<RateFit>,
}

impl ExperimentReport {
    /// Builds summaries from records that are already in their final order.
    pub fn new(kind: &str, records: Vec<Record>) -> Self {
        let mut summaries: Vec<Summary> = Vec::new();
        let mut groups: Vec<(usize, String, Vec<&Record>)> = Vec::new();
        for r in &records {
            match groups.iter_mut().find(|(c, e, _)| *c == r.cell && *e == r.estimator) {
                Some(g) => g.2.push(r),
                None => groups.push((r.cell, r.estimator.clone(), vec![r])),
            }
        }
        groups.sort_by_key(|g| g.0);
        for (cell, estimator, rs) in groups {
            let n = rs.len() as f64;
            let mean = rs.iter().map(|r| r.error).sum::<f64>() / n;
            let se = if rs.len() > 1 {
                (rs.iter().map(|r| (r.error - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            let prev: Vec<f64> = rs.iter().filter_map(|r| r.prevalence).collect();
            summaries.push(Summary {
                cell,
                setting: rs[0].setting.clone(),
                x: rs[0].x,
                estimator,
                count: rs.len(),
                mean,
                se,
                mean_prevalence: (!prev.is_empty()).then(|| prev.iter().sum::<f64>() / prev.len() as f64),
            });
        }
        Self { kind: kind.to_string(), records, summaries, rate_fits: Vec::new() }
    }

    pub fn summaries_for<'a>(&'a self, estimator: &'a str) -> impl Iterator<Item = &'a Summary> + 'a {
        self.summaries.iter().filter(move |s| s.estimator == estimator)
    }

    pub fn records_for<'a>(&'a self, estimator: &'a str) -> impl Iterator<Item = &'a Record> + 'a {
        self.records.iter().filter(move |r| r.estimator == estimator)
    }

    /// Long-format CSV, one row per record.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for s in &self.summaries {
            out.serialize(s)?;
        }
        out.flush()?;
        Ok(())
    }
}
