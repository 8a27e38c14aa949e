//! JSON-lines study records.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use cqhpo_core::{PairInterval, ParamSpace, ParamValue, Trial};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranking::RunTrace;

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: line {line}: {source}")]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("{path}: records out of order at line {line}")]
    Order { path: PathBuf, line: usize },
}

/// One evaluated trial of one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub algorithm: String,
    pub dataset: String,
    pub seed: u64,
    pub iteration: usize,
    pub config: BTreeMap<String, ParamValue>,
    pub performance: Option<f64>,
    pub runtime_seconds: f64,
    pub best_so_far: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_state: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<PairInterval>>,
}

impl ResultRecord {
    pub fn from_trial(algorithm: &str, dataset: &str, seed: u64, space: &ParamSpace, trial: &Trial) -> Self {
        let config = space.params().iter().zip(&trial.config.values).map(|(p, v)| (p.name.clone(), v.clone())).collect();
        Self {
            algorithm: algorithm.into(),
            dataset: dataset.into(),
            seed,
            iteration: trial.iteration,
            config,
            performance: trial.performance,
            runtime_seconds: trial.runtime_seconds,
            best_so_far: trial.best_so_far,
            alpha_state: trial.alpha_state.clone(),
            intervals: trial.intervals.clone(),
        }
    }

    /// The record as one JSON line, newline included.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("records serialize");
        s.push('\n');
        s
    }
}

pub fn write_records<W: Write>(mut w: W, records: &[ResultRecord]) -> std::io::Result<()> {
    for r in records {
        w.write_all(r.to_line().as_bytes())?;
    }
    w.flush()
}

/// Reads a results file; iterations must run 0, 1, 2, ...
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>, ResultsError> {
    let file = std::fs::File::open(path).map_err(|source| ResultsError::Io { path: path.into(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ResultsError::Io { path: path.into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ResultRecord = serde_json::from_str(&line).map_err(|source| ResultsError::Parse { path: path.into(), line: i + 1, source })?;
        if rec.iteration != out.len() {
            return Err(ResultsError::Order { path: path.into(), line: i + 1 });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Builds a rank-aggregation trace. `overhead` adds per-iteration optimizer
/// seconds to the objective runtimes when known.
pub fn trace_from_records(records: &[ResultRecord], overhead: Option<&[f64]>) -> Option<RunTrace> {
    let first = records.first()?;
    let mut cost = 0.0;
    let mut cumulative_cost = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        cost += r.runtime_seconds + overhead.and_then(|o| o.get(i)).copied().unwrap_or(0.0);
        cumulative_cost.push(cost);
    }
    Some(RunTrace {
        algorithm: first.algorithm.clone(),
        dataset: first.dataset.clone(),
        seed: first.seed,
        best_so_far: records.iter().map(|r| r.best_so_far.unwrap_or(f64::NEG_INFINITY)).collect(),
        cumulative_cost,
    })
}
