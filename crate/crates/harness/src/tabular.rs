//! Lookup-table benchmarks.
//!
//! A benchmark is a CSV file whose header holds the parameter names followed
//! by `__performance` and optionally `__runtime_seconds`, plus a sidecar
//! `<stem>.space.toml` declaring the parameters:
//!
//! ```toml
//! [[params]]
//! name = "learning_rate"
//! kind = "continuous"
//! lo = 0.0001
//! hi = 0.1
//!
//! [[params]]
//! name = "booster"
//! kind = "categorical"
//! levels = ["gbtree", "dart"]
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use cqhpo_core::optimizer::EvaluationError;
use cqhpo_core::space::SpaceError;
use cqhpo_core::{Configuration, Evaluation, Objective, ParamSpace};
use thiserror::Error;

pub const PERFORMANCE_COLUMN: &str = "__performance";
pub const RUNTIME_COLUMN: &str = "__runtime_seconds";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: invalid space file: {message}")]
    SpaceFile { path: PathBuf, message: String },
    #[error("{path}: header: {message}")]
    Header { path: PathBuf, message: String },
    #[error("{path}: line {line}: column `{column}`: {message}")]
    Row { path: PathBuf, line: u64, column: String, message: String },
    #[error("benchmark `{0}` has no rows")]
    Empty(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("performance must be finite, got {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub performance: f64,
    pub runtime_seconds: Option<f64>,
}

/// A finite benchmark answered by exact lookup.
#[derive(Debug, Clone)]
pub struct TabularBenchmark {
    name: String,
    space: ParamSpace,
    configs: Vec<Configuration>,
    rows: HashMap<Configuration, TableEntry>,
}

impl TabularBenchmark {
    pub fn new(name: impl Into<String>, space: ParamSpace) -> Self {
        Self { name: name.into(), space, configs: Vec::new(), rows: HashMap::new() }
    }

    /// Adds a row; returns `true` if it replaced an existing configuration.
    pub fn insert(&mut self, config: Configuration, entry: TableEntry) -> Result<bool, BenchError> {
        self.space.validate(&config)?;
        if !entry.performance.is_finite() {
            return Err(BenchError::NonFinite(entry.performance));
        }
        match self.rows.insert(config.clone(), entry) {
            Some(_) => Ok(true),
            None => {
                self.configs.push(config);
                Ok(false)
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Configurations in first-insertion order.
    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn get(&self, config: &Configuration) -> Option<&TableEntry> {
        self.rows.get(config)
    }

    /// Rows in first-insertion order.
    pub fn entries(&self) -> impl Iterator<Item = (&Configuration, &TableEntry)> {
        self.configs.iter().map(|c| (c, &self.rows[c]))
    }

    pub fn has_runtimes(&self) -> bool {
        self.rows.values().all(|e| e.runtime_seconds.is_some())
    }
}

impl Objective for TabularBenchmark {
    fn space(&self) -> &ParamSpace {
        &self.space
    }

    fn evaluate(&self, config: &Configuration) -> Result<Evaluation, EvaluationError> {
        let e = self
            .rows
            .get(config)
            .ok_or_else(|| EvaluationError(format!("configuration not in benchmark `{}`", self.name)))?;
        Ok(Evaluation { performance: e.performance, runtime_seconds: e.runtime_seconds.unwrap_or(0.0) })
    }

    fn pool(&self) -> Option<&[Configuration]> {
        Some(&self.configs)
    }
}

/// `<dir>/<stem>.space.toml` next to `csv_path`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.space.toml"))
}

pub fn load_space(path: &Path) -> Result<ParamSpace, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.into(), source })?;
    toml::from_str(&text).map_err(|e| BenchError::SpaceFile { path: path.into(), message: e.to_string() })
}

/// Loads a benchmark named after the file stem. Duplicate configurations
/// keep the last row.
pub fn load_tabular(path: &Path) -> Result<TabularBenchmark, BenchError> {
    let space = load_space(&sidecar_path(path))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let csv_err = |source| BenchError::Csv { path: path.into(), source };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    let header_err = |message: String| BenchError::Header { path: path.into(), message };

    let mut param_cols = Vec::with_capacity(space.len());
    for p in space.params() {
        let hits: Vec<usize> = header.iter().enumerate().filter(|(_, h)| *h == p.name).map(|(i, _)| i).collect();
        match hits[..] {
            [i] => param_cols.push(i),
            [] => return Err(header_err(format!("missing column `{}`", p.name))),
            _ => return Err(header_err(format!("duplicate column `{}`", p.name))),
        }
    }
    let perf_col = header
        .iter()
        .position(|h| h == PERFORMANCE_COLUMN)
        .ok_or_else(|| header_err(format!("missing column `{PERFORMANCE_COLUMN}`")))?;
    let runtime_col = header.iter().position(|h| h == RUNTIME_COLUMN);
    if let Some(extra) = header.iter().find(|h| *h != PERFORMANCE_COLUMN && *h != RUNTIME_COLUMN && space.index_of(h).is_none()) {
        return Err(header_err(format!("unknown column `{extra}`")));
    }

    let mut bench = TabularBenchmark::new(name, space);
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |column: &str, message: String| BenchError::Row { path: path.into(), line, column: column.into(), message };
        let mut values = Vec::with_capacity(param_cols.len());
        for (pi, &ci) in param_cols.iter().enumerate() {
            let name = &bench.space.params()[pi].name;
            let v = bench.space.parse_value(pi, &record[ci]).map_err(|e| row_err(name, e.to_string()))?;
            values.push(v);
        }
        let config = Configuration::new(values);
        bench.space.validate(&config).map_err(|e| row_err("<config>", e.to_string()))?;
        let performance: f64 = record[perf_col]
            .trim()
            .parse()
            .map_err(|_| row_err(PERFORMANCE_COLUMN, format!("not a number: `{}`", &record[perf_col])))?;
        if !performance.is_finite() {
            return Err(row_err(PERFORMANCE_COLUMN, format!("non-finite performance {performance}")));
        }
        let runtime_seconds = match runtime_col.map(|c| record[c].trim()) {
            None | Some("") => None,
            Some(text) => {
                let r: f64 = text.parse().map_err(|_| row_err(RUNTIME_COLUMN, format!("not a number: `{text}`")))?;
                if !(r.is_finite() && r >= 0.0) {
                    return Err(row_err(RUNTIME_COLUMN, format!("runtime must be finite and nonnegative, got {r}")));
                }
                Some(r)
            }
        };
        if bench.insert(config, TableEntry { performance, runtime_seconds })? {
            log::warn!("{}: line {line}: duplicate configuration, keeping the later row", path.display());
        }
    }
    if bench.is_empty() {
        return Err(BenchError::Empty(bench.name));
    }
    Ok(bench)
}

/// Writes the CSV and its sidecar space file.
pub fn write_tabular(bench: &TabularBenchmark, path: &Path) -> Result<(), BenchError> {
    let space_text = toml::to_string(&bench.space).map_err(|e| BenchError::SpaceFile { path: sidecar_path(path), message: e.to_string() })?;
    let side = sidecar_path(path);
    std::fs::write(&side, space_text).map_err(|source| BenchError::Io { path: side, source })?;
    let csv_err = |source| BenchError::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<&str> = bench.space.params().iter().map(|p| p.name.as_str()).collect();
    header.extend([PERFORMANCE_COLUMN, RUNTIME_COLUMN]);
    w.write_record(&header).map_err(csv_err)?;
    for (config, entry) in bench.entries() {
        let mut row: Vec<String> = config.values.iter().map(ToString::to_string).collect();
        row.push(entry.performance.to_string());
        row.push(entry.runtime_seconds.map(|r| r.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| BenchError::Io { path: path.into(), source })?;
    Ok(())
}
