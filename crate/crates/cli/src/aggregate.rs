//! Aggregation of a finished grid into rank paths and pairwise tests.
//!
//! Reads `<dir>/<dataset>/<algorithm>/seed_<n>.jsonl`. A file without a
//! matching checksum sidecar counts as missing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use cqhpo_harness::ranking::{Grid, PValueMatrix};
use cqhpo_harness::results::{read_records, trace_from_records};
use cqhpo_harness::{aggregate_rank_paths, bootstrap_rank_ci, wilcoxon_bh, BudgetAxis, RankPath, RunTrace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::{checksum_ok, csv_err, io_err, timing_path, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateOptions {
    pub axis: BudgetAxis,
    pub wilcoxon: bool,
    pub n_boot: usize,
    pub seed: u64,
    /// BH level for the pairwise tests.
    pub q: f64,
    /// Add the optimizer's own wallclock (from the timing sidecars) to the
    /// objective runtimes on the runtime axis.
    pub with_overhead: bool,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        Self { axis: BudgetAxis::Iteration, wilcoxon: false, n_boot: 2000, seed: 0, q: 0.05, with_overhead: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSummary {
    pub path: RankPath,
    /// `[algorithm][point]`
    pub bands: Vec<Vec<(f64, f64)>>,
    pub pvalues: Option<PValueMatrix>,
    pub written: Vec<PathBuf>,
}

#[derive(Deserialize)]
struct Timing {
    wallclock_seconds: Vec<f64>,
}

fn parse_seed(file: &str) -> Option<u64> {
    file.strip_prefix("seed_")?.strip_suffix(".jsonl")?.parse().ok()
}

fn subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    Ok(out)
}

/// Collects traces from a results directory, failing with the list of
/// missing or unverifiable cells if the grid is incomplete.
pub fn collect_traces(dir: &Path, with_overhead: bool) -> Result<Vec<RunTrace>, CliError> {
    // (dataset, algorithm) -> seed -> file
    let mut files: BTreeMap<(String, String), BTreeMap<u64, PathBuf>> = BTreeMap::new();
    for (dataset, ddir) in subdirs(dir)? {
        for (alg, adir) in subdirs(&ddir)? {
            for entry in std::fs::read_dir(&adir).map_err(io_err(&adir))? {
                let entry = entry.map_err(io_err(&adir))?;
                if let Some(seed) = parse_seed(&entry.file_name().to_string_lossy()) {
                    files.entry((dataset.clone(), alg.clone())).or_default().insert(seed, entry.path());
                }
            }
        }
    }
    if files.is_empty() {
        return Err(CliError::Invalid(format!("no result files under {}", dir.display())));
    }
    let datasets: BTreeSet<&String> = files.keys().map(|(d, _)| d).collect();
    let algorithms: BTreeSet<&String> = files.keys().map(|(_, a)| a).collect();
    let seeds: BTreeSet<u64> = files.values().flat_map(|m| m.keys().copied()).collect();

    let mut missing = Vec::new();
    let mut traces = Vec::new();
    for d in &datasets {
        for a in &algorithms {
            for &s in &seeds {
                let label = format!("{d}/{a}/seed_{s}");
                let Some(path) = files.get(&((*d).clone(), (*a).clone())).and_then(|m| m.get(&s)) else {
                    missing.push(label);
                    continue;
                };
                if !checksum_ok(path) {
                    missing.push(format!("{label} (unverified)"));
                    continue;
                }
                let records = read_records(path)?;
                let overhead = if with_overhead { read_timing(path) } else { None };
                match trace_from_records(&records, overhead.as_deref()) {
                    Some(mut t) => {
                        // Directory names are authoritative.
                        t.dataset = (*d).clone();
                        t.algorithm = (*a).clone();
                        t.seed = s;
                        traces.push(t);
                    }
                    None => missing.push(format!("{label} (empty)")),
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(CliError::IncompleteGrid(missing));
    }
    Ok(traces)
}

fn read_timing(path: &Path) -> Option<Vec<f64>> {
    let text = std::fs::read_to_string(timing_path(path)).ok()?;
    match serde_json::from_str::<Timing>(&text) {
        Ok(t) => Some(t.wallclock_seconds),
        Err(e) => {
            log::warn!("{}: unreadable timing sidecar: {e}", path.display());
            None
        }
    }
}

fn axis_name(axis: BudgetAxis) -> &'static str {
    match axis {
        BudgetAxis::Iteration => "iteration",
        BudgetAxis::Runtime => "runtime",
    }
}

pub fn cmd_aggregate(dir: &Path, opts: &AggregateOptions) -> Result<AggregateSummary, CliError> {
    let traces = collect_traces(dir, opts.with_overhead)?;
    let path = aggregate_rank_paths(&traces, opts.axis)?;
    let bands = if path.datasets.len() < 2 {
        log::warn!("a single dataset gives no bootstrap band; writing zero-width intervals");
        path.mean_rank.iter().map(|r| r.iter().map(|&m| (m, m)).collect()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        bootstrap_rank_ci(&path, opts.n_boot, 0.95, &mut rng)?
    };
    let mut written = Vec::new();
    let out = dir.join(format!("rank_paths_{}.csv", axis_name(opts.axis)));
    write_rank_paths(&out, &path, &bands)?;
    written.push(out);

    let pvalues = if opts.wilcoxon {
        let finals = Grid::new(&traces)?.final_performance();
        let m = wilcoxon_bh(&path.algorithms, &finals, opts.q)?;
        let matrix = dir.join("pvalue_matrix.csv");
        let pairs = dir.join("pvalue_pairs.csv");
        write_pvalue_matrix(&matrix, &m)?;
        write_pvalue_pairs(&pairs, &m)?;
        written.push(matrix);
        written.push(pairs);
        Some(m)
    } else {
        None
    };
    Ok(AggregateSummary { path, bands, pvalues, written })
}

fn write_rank_paths(path: &Path, rp: &RankPath, bands: &[Vec<(f64, f64)>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["algorithm", "budget", "mean_rank", "ci_lo", "ci_hi"]).map_err(csv_err(path))?;
    for (a, alg) in rp.algorithms.iter().enumerate() {
        for (p, b) in rp.budget.iter().enumerate() {
            let (lo, hi) = bands[a][p];
            w.write_record([alg.clone(), b.to_string(), rp.mean_rank[a][p].to_string(), lo.to_string(), hi.to_string()])
                .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// BH-adjusted p-values as a square matrix.
fn write_pvalue_matrix(path: &Path, m: &PValueMatrix) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["algorithm".to_string()];
    header.extend(m.algorithms.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, alg) in m.algorithms.iter().enumerate() {
        let mut row = vec![alg.clone()];
        row.extend(m.adjusted[i].iter().map(|p| p.to_string()));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_pvalue_pairs(path: &Path, m: &PValueMatrix) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["algorithm_a", "algorithm_b", "p_raw", "p_adjusted", "significant"]).map_err(csv_err(path))?;
    for i in 0..m.algorithms.len() {
        for j in i + 1..m.algorithms.len() {
            w.write_record([
                m.algorithms[i].clone(),
                m.algorithms[j].clone(),
                m.raw[i][j].to_string(),
                m.adjusted[i][j].to_string(),
                m.significant[i][j].to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_file_names() {
        assert_eq!(parse_seed("seed_12.jsonl"), Some(12));
        assert_eq!(parse_seed("seed_12.jsonl.sha256"), None);
        assert_eq!(parse_seed("seed_x.jsonl"), None);
    }
}
