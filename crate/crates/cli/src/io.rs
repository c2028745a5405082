//! CSV datasets: a header row, an integer `z` column of observed labels,
//! an optional integer `y` column of true labels, and numeric covariates
//! in every other column.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use pulasso::{PUDataset, Scenario};

use crate::error::{CliError, CliResult};

/// Parsed CSV contents before a scenario is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub covariates: Vec<String>,
    pub x: Array2<f64>,
    pub z: Option<Vec<usize>>,
    pub y: Option<Vec<usize>>,
}

impl Table {
    /// Largest observed label, or 0 for an empty or unlabeled table.
    pub fn max_label(&self) -> usize {
        self.z.as_ref().and_then(|z| z.iter().copied().max()).unwrap_or(0)
    }
}

fn parse_label(path: &Path, row: usize, column: &str, raw: &str) -> CliResult<usize> {
    raw.parse::<usize>().map_err(|_| CliError::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message: format!("`{raw}` is not a non-negative integer label"),
    })
}

/// Reads a table. Rows are numbered from 1, not counting the header.
pub fn load_table(path: &Path, require_labels: bool) -> CliResult<Table> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::format(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let z_col = header.iter().position(|h| h == "z");
    let y_col = header.iter().position(|h| h == "y");
    if require_labels && z_col.is_none() {
        return Err(CliError::format(path, "missing label column `z`"));
    }
    let cov_cols: Vec<usize> = (0..header.len()).filter(|&j| Some(j) != z_col && Some(j) != y_col).collect();
    if cov_cols.is_empty() {
        return Err(CliError::format(path, "no covariate columns"));
    }

    let mut values = Vec::new();
    let mut z = Vec::new();
    let mut y = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        if let Some(j) = z_col {
            z.push(parse_label(path, row, "z", &record[j])?);
        }
        if let Some(j) = y_col {
            y.push(parse_label(path, row, "y", &record[j])?);
        }
        for &j in &cov_cols {
            let raw = &record[j];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(CliError::NonNumericCovariate {
                        path: path.to_path_buf(),
                        row,
                        column: header[j].clone(),
                        value: raw.to_string(),
                    })
                }
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::format(path, "no data rows"));
    }
    let x = Array2::from_shape_vec((rows, cov_cols.len()), values).expect("row lengths checked");
    Ok(Table {
        covariates: cov_cols.iter().map(|&j| header[j].clone()).collect(),
        x,
        z: z_col.map(|_| z),
        y: y_col.map(|_| y),
    })
}

/// Attaches a scenario. Labels above the scenario's class count are
/// reported with their row.
pub fn into_dataset(path: &Path, table: Table, scenario: Scenario) -> CliResult<PUDataset> {
    let k = scenario.k();
    let z = table.z.ok_or_else(|| CliError::format(path, "missing label column `z`"))?;
    for labels in std::iter::once(&z).chain(table.y.as_ref()) {
        if let Some((i, &label)) = labels.iter().enumerate().find(|(_, &l)| l > k) {
            return Err(CliError::LabelOutOfRange { path: path.to_path_buf(), row: i + 1, label, k });
        }
    }
    Ok(PUDataset::new(table.x, z, scenario, table.y)?)
}

pub fn load_dataset(path: &Path, scenario: Scenario) -> CliResult<PUDataset> {
    into_dataset(path, load_table(path, true)?, scenario)
}

/// Default covariate names `x1..xp`.
pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Writes `z`, then `y` when present, then the covariates. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_dataset(path: &Path, data: &PUDataset, names: &[String]) -> CliResult<()> {
    let mut out = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e))?;
    let mut header = vec!["z".to_string()];
    if data.y().is_some() {
        header.push("y".to_string());
    }
    header.extend(names.iter().cloned());
    out.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = vec![data.z()[i].to_string()];
        if let Some(y) = data.y() {
            rec.push(y[i].to_string());
        }
        rec.extend(data.row(i).iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
