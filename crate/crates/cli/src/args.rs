//! Command-line flags. Every command's flag set doubles as its config-file
//! schema: keys are the long flag names, and values in a `--config` file
//! take precedence over the same flag given on the command line.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use pulasso::evaluate::{CvMetric, Method, ScalingCell};
use pulasso::ModelKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "pulasso", version, about = "Penalized multi-class regression from positive-unlabeled data")]
pub struct Cli {
    /// Worker threads for cross-validation and benchmarks.
    #[arg(long, global = true, env = "PULASSO_THREADS")]
    pub threads: Option<usize>,
    /// TOML file whose keys override the command's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a PU dataset and its true parameters.
    Simulate(SimulateArgs),
    /// Fit a model at a fixed penalty or one chosen by cross-validation.
    Fit(FitArgs),
    /// Cross-validation curve over a penalty grid.
    Cv(CvArgs),
    /// Class labels and probabilities from a saved model.
    Predict(PredictArgs),
    /// Where an estimate sits relative to the region around the truth.
    Diagnose(DiagnoseArgs),
    /// Estimation error against the theoretical rate.
    BenchScaling(BenchScalingArgs),
    /// PU against naive and oracle estimators across a sweep.
    BenchCompare(BenchCompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    #[value(alias = "mn")]
    Multinomial,
    #[value(alias = "on")]
    Ordinal,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Multinomial => ModelKind::Multinomial,
            ModelArg::Ordinal => ModelKind::Ordinal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioArg {
    CaseControl,
    SingleTraining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverArg {
    Pgd,
    Em,
    Naive,
}

impl From<SolverArg> for Method {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Pgd => Method::Pgd,
            SolverArg::Em => Method::Em,
            SolverArg::Naive => Method::Naive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    HeldoutLoss,
    Misclassification,
    Mse,
}

impl From<MetricArg> for CvMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::HeldoutLoss => CvMetric::HeldoutLoss,
            MetricArg::Misclassification => CvMetric::Misclassification,
            MetricArg::Mse => CvMetric::Mse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepArg {
    /// Positive-class prevalence.
    Prevalence,
    /// Fraction of unlabeled rows.
    Ratio,
    /// Assumed labeling probability under single-training masking.
    Misspec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetArg {
    /// A few seconds; for smoke tests.
    Tiny,
    /// Two lines of four sample sizes each.
    Standard,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub p: usize,
    /// Number of positive classes.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Number of active covariates.
    #[arg(long, default_value_t = 2)]
    pub s: usize,
    #[arg(long, value_enum, default_value = "case-control")]
    pub scenario: ScenarioArg,
    /// Labeling probabilities, one value or one per class (single-training).
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub pi_st: Vec<f64>,
    /// Share of unlabeled rows (case-control).
    #[arg(long, default_value_t = 0.5)]
    pub unlabeled_fraction: f64,
    /// Total positive prevalence at zero covariates; balanced classes if absent.
    #[arg(long)]
    pub positive_share: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub covariate_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file for the true parameters and scenario.
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_enum, default_value = "case-control")]
    pub scenario: ScenarioArg,
    /// Case-control ratios, one value or one per class.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    /// Labeling probabilities, one value or one per class.
    #[arg(long, value_delimiter = ',')]
    pub pi_st: Option<Vec<f64>>,
    /// Number of positive classes; the largest label when absent.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, conflicts_with = "cv")]
    pub lambda: Option<f64>,
    /// Choose the penalty by cross-validation.
    #[arg(long)]
    pub cv: bool,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 30)]
    pub grid_len: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_ratio: f64,
    /// JSON group structure; rows of the regression matrix (multinomial) or
    /// single coefficients (ordinal) when absent.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pgd")]
    pub solver: SolverArg,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model artifact to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the fit report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CvArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_enum, default_value = "case-control")]
    pub scenario: ScenarioArg,
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub pi_st: Option<Vec<f64>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 30)]
    pub grid_len: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_ratio: f64,
    #[arg(long, value_enum, default_value = "heldout-loss")]
    pub metric: MetricArg,
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pgd")]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV of the curve (`lambda,mean,se`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PredictArgs {
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Add one probability column per class.
    #[arg(long)]
    pub proba: bool,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DiagnoseArgs {
    /// Truth file from `simulate`, or a model artifact.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Model artifact of the estimate.
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    /// Dataset whose largest covariate magnitude bounds the design.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub cov_bound: Option<f64>,
    /// Case-control ratios; taken from the estimate's scenario when absent.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    /// Allowed shrinkage of the smallest cut-point gap (ordinal).
    #[arg(long)]
    pub slack: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BenchScalingArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_enum, default_value = "tiny")]
    pub preset: PresetArg,
    /// Grid of sample sizes and dimensions; replaces the preset's cells.
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<ScalingCell>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Fixed constant in the penalty rule; calibrated when absent.
    #[arg(long)]
    pub lambda_const: Option<f64>,
    #[arg(long, value_enum, default_value = "pgd")]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BenchCompareArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_enum, default_value = "prevalence")]
    pub sweep: SweepArg,
    /// Sweep values; a default set per sweep when absent.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Labeling probability used to mask the data (misspec sweep).
    #[arg(long, default_value_t = 0.6)]
    pub true_pi: f64,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 400)]
    pub p: usize,
    #[arg(long, default_value_t = 2)]
    pub s: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, default_value_t = 100)]
    pub test_size: usize,
    #[arg(long)]
    pub covariate_sd: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 30)]
    pub grid_len: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_ratio: f64,
    #[arg(long, value_enum, default_value = "pgd")]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}
