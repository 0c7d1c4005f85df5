//! File formats: CSV matrices and vectors, JSON scenario files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wbh_core::Matrix;

use crate::error::{AppError, Result};
use crate::grid::{generate_scenario_grid, scenario_seed, GridSpec};
use crate::report::SCHEMA_VERSION;
use crate::scenario::Scenario;

fn parse_error(path: &Path, message: impl Into<String>) -> AppError {
    AppError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parses comma-separated rows of numbers. A first row that does not parse
/// as numbers is taken as a header and skipped. Lines starting with `#` are
/// comments.
pub fn parse_rows(text: &str, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(path, e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if k == 0 => continue,
            Err(e) => {
                let line = record.position().map_or(k as u64 + 1, |p| p.line());
                return Err(parse_error(path, format!("line {line}: {e}")));
            }
        }
    }
    if rows.is_empty() {
        return Err(parse_error(path, "no numeric rows"));
    }
    Ok(rows)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| AppError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a row-major matrix.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let rows = parse_rows(&read_text(path)?, path)?;
    Matrix::from_rows(&rows).map_err(|e| parse_error(path, e.to_string()))
}

/// Reads a vector stored as one row or one column.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let rows = parse_rows(&read_text(path)?, path)?;
    if rows.len() == 1 {
        return Ok(rows.into_iter().next().unwrap_or_default());
    }
    if rows.iter().all(|r| r.len() == 1) {
        return Ok(rows.into_iter().map(|r| r[0]).collect());
    }
    Err(parse_error(path, "expected a single row or a single column"))
}

/// Contents of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

impl ScenarioFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| parse_error(path, e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(parse_error(
                path,
                format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", file.schema_version),
            ));
        }
        if file.scenarios.is_empty() && file.grid.is_none() {
            return Err(parse_error(path, "file has neither scenarios nor a grid"));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    /// Explicit scenarios followed by the expanded grid. Every scenario gets
    /// `replications` and the seed derived from `seed` and its position.
    pub fn resolve(&self, replications: u64, seed: u64) -> Result<Vec<Scenario>> {
        let mut all = self.scenarios.clone();
        if let Some(grid) = &self.grid {
            all.extend(generate_scenario_grid(grid, replications, seed)?);
        }
        for (k, sc) in all.iter_mut().enumerate() {
            sc.replications = replications;
            sc.seed = scenario_seed(seed, k as u64);
        }
        Ok(all)
    }
}
