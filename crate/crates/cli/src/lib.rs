//! Command-line front end for study grids, calibration experiments,
//! stratification screens and result aggregation.
//!
//! Every command is deterministic given its inputs: seeds come from the
//! manifest and wallclock measurements only ever land in `.timing.json`
//! sidecars.

pub mod aggregate;
pub mod calibrate;
pub mod manifest;
pub mod run;
pub mod stratify;

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use aggregate::{cmd_aggregate, AggregateOptions, AggregateSummary};
pub use calibrate::{cmd_calibrate, CalibrateSummary};
pub use manifest::{ManifestError, RunManifest};
pub use run::{cmd_run, RunOptions, RunSummary};
pub use stratify::{cmd_stratify, StratifyOptions, StratifyRow};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "CQHPO_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Screen(#[from] cqhpo_harness::screens::ScreenError),
    #[error(transparent)]
    Bench(#[from] cqhpo_harness::tabular::BenchError),
    #[error(transparent)]
    Results(#[from] cqhpo_harness::results::ResultsError),
    #[error(transparent)]
    Metrics(#[from] cqhpo_harness::metrics::MetricsError),
    #[error(transparent)]
    Rank(cqhpo_harness::ranking::RankError),
    #[error("{} studies failed: {}", .0.len(), .0.join("; "))]
    StudyFailures(Vec<String>),
    #[error("incomplete result grid, missing: {}", .0.join(", "))]
    IncompleteGrid(Vec<String>),
}

impl CliError {
    /// 2 for failed studies and incomplete grids, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::StudyFailures(_) | CliError::IncompleteGrid(_) => 2,
            _ => 1,
        }
    }
}

impl From<cqhpo_harness::ranking::RankError> for CliError {
    fn from(e: cqhpo_harness::ranking::RankError) -> Self {
        match e {
            cqhpo_harness::ranking::RankError::MissingCells(cells) => CliError::IncompleteGrid(cells),
            other => CliError::Rank(other),
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.to_path_buf(), source: std::io::Error::other(e) }
}

pub(crate) fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

/// `<file>.sha256` next to a result file.
pub fn checksum_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".sha256");
    PathBuf::from(s)
}

/// `<file>.timing.json` next to a result file.
pub fn timing_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".timing.json");
    PathBuf::from(s)
}

/// Whether `path` exists and matches the digest in its checksum sidecar.
pub fn checksum_ok(path: &Path) -> bool {
    let (Ok(data), Ok(sidecar)) = (std::fs::read(path), std::fs::read_to_string(checksum_path(path))) else {
        return false;
    };
    sidecar.split_whitespace().next() == Some(sha256_hex(&data).as_str())
}

pub(crate) fn checksum_line(digest: &str, path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{digest}  {name}\n")
}

/// Default worker count: the environment variable, else the number of
/// available cores.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|n: &usize| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start worker pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(checksum_path(Path::new("a/seed_0.jsonl")), PathBuf::from("a/seed_0.jsonl.sha256"));
        assert_eq!(timing_path(Path::new("seed_3.jsonl")), PathBuf::from("seed_3.jsonl.timing.json"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Invalid("x".into()).exit_code(), 1);
        assert_eq!(CliError::StudyFailures(vec![]).exit_code(), 2);
        assert_eq!(CliError::from(cqhpo_harness::ranking::RankError::MissingCells(vec!["a".into()])).exit_code(), 2);
    }
}
