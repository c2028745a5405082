use std::path::Path;

use pulasso::evaluate::Method;
use pulasso::simulate::SimConfig;
use pulasso::{GroupStructure, ModelKind, ModelParams, MultinomialParams, OrdinalParams, Scenario};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{read_text, write_text};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMetadata {
    pub solver: Method,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective at the returned parameters.
    pub objective: f64,
    pub stationarity_gap: f64,
    pub objective_trace: Vec<f64>,
    /// Number of folds when the penalty was chosen by cross-validation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_folds: Option<usize>,
}

/// A fitted model with everything needed to reuse or audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub model: ModelKind,
    pub scenario: Scenario,
    pub k: usize,
    pub p: usize,
    pub covariates: Vec<String>,
    pub params: ModelParams,
    pub groups: GroupStructure,
    pub lambda: f64,
    pub fit: FitMetadata,
}

impl ModelArtifact {
    pub fn validate(&self) -> Result<(), String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!("unsupported format_version {} (expected {FORMAT_VERSION})", self.format_version));
        }
        if self.params.kind() != self.model {
            return Err(format!("model is `{}` but parameters are `{}`", self.model, self.params.kind()));
        }
        if self.params.p() != self.p || self.params.k() != self.k || self.scenario.k() != self.k {
            return Err(format!(
                "declared p={}, K={} disagree with parameters (p={}, K={}) or scenario (K={})",
                self.p,
                self.k,
                self.params.p(),
                self.params.k(),
                self.scenario.k()
            ));
        }
        if self.covariates.len() != self.p {
            return Err(format!("{} covariate names for p={}", self.covariates.len(), self.p));
        }
        if self.groups.dim() != self.params.penalized().len() {
            return Err(format!(
                "group structure covers {} coordinates, parameters have {}",
                self.groups.dim(),
                self.params.penalized().len()
            ));
        }
        validate_params(&self.params)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn from_json(path: &Path, text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let art: Self = serde_path_to_error::deserialize(de).map_err(|e| CliError::format(path, e))?;
        art.validate().map_err(|e| CliError::format(path, e))?;
        Ok(art)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_json(path, &read_text(path)?)
    }
}

/// Multinomial fields are public, so shape and finiteness are rechecked.
fn validate_params(params: &ModelParams) -> Result<(), String> {
    match params {
        ModelParams::Multinomial(m) => MultinomialParams::new(m.theta.clone(), m.b.clone()).map(|_| ()),
        ModelParams::Ordinal(o) => OrdinalParams::new(o.theta().clone(), o.p()).map(|_| ()),
    }
    .map_err(|e| e.to_string())
}

/// Parameters of a simulated population, written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub format_version: u32,
    pub params: ModelParams,
    pub scenario: Scenario,
    pub simulation: SimConfig,
}

impl TruthFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("truth serializes");
        s.push('\n');
        s
    }
}

/// Parameters and scenario read from either a truth file or an artifact.
#[derive(Debug, Clone, Deserialize)]
pub struct ParamsFile {
    pub params: ModelParams,
    pub scenario: Option<Scenario>,
}

impl ParamsFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let file: Self = serde_path_to_error::deserialize(de).map_err(|e| CliError::format(path, e))?;
        validate_params(&file.params).map_err(|e| CliError::format(path, e))?;
        Ok(file)
    }
}
