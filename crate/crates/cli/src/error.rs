use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: row {row}, column `{column}`: {message}")]
    Parse { path: PathBuf, row: usize, column: String, message: String },
    #[error("{path}: row {row}: label {label} is outside 0..={k}")]
    LabelOutOfRange { path: PathBuf, row: usize, label: usize, k: usize },
    #[error("{path}: row {row}, column `{column}`: `{value}` is not a number")]
    NonNumericCovariate { path: PathBuf, row: usize, column: String, value: String },
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] pulasso::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        CliError::Format { path: path.into(), message: message.to_string() }
    }
}
