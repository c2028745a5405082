use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::read_text;

/// Overlays the keys of a TOML file on the parsed flags. Unknown keys and
/// ill-typed values are reported with their key path.
pub fn overlay<T: Serialize + DeserializeOwned>(flags: T, config: Option<&Path>) -> CliResult<T> {
    let Some(path) = config else {
        return Ok(flags);
    };
    let err = |message: String| CliError::Config { path: path.to_path_buf(), message };
    let text = read_text(path)?;
    let file: toml::Table = text.parse().map_err(|e: toml::de::Error| err(e.to_string()))?;
    let mut merged = toml::Table::try_from(&flags).map_err(|e| err(e.to_string()))?;
    merged.extend(file);
    serde_path_to_error::deserialize(toml::Value::Table(merged)).map_err(|e| {
        let key = e.path().to_string();
        err(format!("key `{key}`: {}", e.into_inner()))
    })
}
