//! Study grids: every (benchmark, algorithm, seed) cell becomes one
//! JSON-lines file, `<output>/<dataset>/<algorithm>/seed_<n>.jsonl`.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use cqhpo_core::{run_random_search_observed, run_study_observed, Objective, StudyConfig, Trial};
use cqhpo_harness::ResultRecord;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::manifest::{AlgorithmEntry, LoadedBenchmark, RunManifest};
use crate::{checksum_line, checksum_ok, checksum_path, create_dir, hex, io_err, thread_pool, timing_path, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    /// Skip cells whose result file is present and matches its checksum.
    pub resume: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub completed: Vec<PathBuf>,
    pub skipped: Vec<PathBuf>,
}

/// Result file of one cell.
pub fn cell_path(output_dir: &Path, dataset: &str, algorithm: &str, seed: u64) -> PathBuf {
    output_dir.join(dataset).join(algorithm).join(format!("seed_{seed}.jsonl"))
}

#[derive(Serialize)]
struct Timing<'a> {
    wallclock_seconds: &'a [f64],
}

enum CellOutcome {
    Done(PathBuf),
    Skipped(PathBuf),
}

/// Runs the manifest's full grid.
pub fn cmd_run(manifest_path: &Path, opts: RunOptions) -> Result<RunSummary, CliError> {
    let manifest = RunManifest::load(manifest_path)?;
    manifest.require_algorithms()?;
    let benches = manifest.load_benchmarks()?;
    create_dir(&manifest.output_dir)?;

    let mut cells = Vec::new();
    for b in &benches {
        for a in &manifest.algorithms {
            for &s in &manifest.seeds.0 {
                cells.push((b, a, s));
            }
        }
    }
    log::info!("running {} studies on {} workers", cells.len(), opts.workers.max(1));
    let pool = thread_pool(opts.workers)?;
    let outcomes: Vec<Result<CellOutcome, String>> =
        pool.install(|| cells.par_iter().map(|&(b, a, s)| run_cell(&manifest.output_dir, b, a, s, opts.resume)).collect());

    let mut summary = RunSummary::default();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(CellOutcome::Done(p)) => summary.completed.push(p),
            Ok(CellOutcome::Skipped(p)) => summary.skipped.push(p),
            Err(msg) => failures.push(msg),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::StudyFailures(failures));
    }
    log::info!("{} studies run, {} skipped", summary.completed.len(), summary.skipped.len());
    Ok(summary)
}

fn run_cell(out: &Path, bench: &LoadedBenchmark, alg: &AlgorithmEntry, seed: u64, resume: bool) -> Result<CellOutcome, String> {
    let path = cell_path(out, &bench.name, &alg.name, seed);
    let label = format!("{}/{}/seed_{seed}", bench.name, alg.name);
    if resume && checksum_ok(&path) {
        log::debug!("{label}: complete, skipping");
        return Ok(CellOutcome::Skipped(path));
    }
    write_study(&path, bench, alg, seed).map_err(|e| format!("{label}: {e}"))?;
    Ok(CellOutcome::Done(path))
}

fn write_study(path: &Path, bench: &LoadedBenchmark, alg: &AlgorithmEntry, seed: u64) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    // A stale checksum must never vouch for a half-written rerun.
    let sidecar = checksum_path(path);
    if sidecar.exists() {
        std::fs::remove_file(&sidecar).map_err(io_err(&sidecar))?;
    }
    let mut file = File::create(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    let mut wallclock = Vec::new();
    let mut write_error: Option<std::io::Error> = None;
    let space = bench.bench.space();
    let config = StudyConfig { seed, ..alg.study.clone() };

    let mut observer = |trial: &Trial, secs: f64| {
        wallclock.push(secs);
        if write_error.is_some() {
            return;
        }
        let line = ResultRecord::from_trial(&alg.name, &bench.name, seed, space, trial).to_line();
        hasher.update(line.as_bytes());
        if let Err(e) = file.write_all(line.as_bytes()).and_then(|_| file.flush()) {
            write_error = Some(e);
        }
    };
    let result = if alg.random_search {
        run_random_search_observed(&bench.bench, &config, &mut observer)
    } else {
        run_study_observed(&bench.bench, &config, &alg.surrogate, &alg.acquisition, &mut observer)
    };
    if let Some(e) = write_error {
        return Err(CliError::Io { path: path.into(), source: e });
    }
    let result = result.map_err(|e| CliError::Invalid(e.to_string()))?;
    file.sync_all().map_err(io_err(path))?;

    let timing = timing_path(path);
    let json = serde_json::to_string(&Timing { wallclock_seconds: &wallclock }).expect("timing serializes");
    std::fs::write(&timing, json).map_err(io_err(&timing))?;
    std::fs::write(&sidecar, checksum_line(&hex(&hasher.finalize()), path)).map_err(io_err(&sidecar))?;
    log::info!(
        "{}/{}/seed_{seed}: {} trials, best {}",
        bench.name,
        alg.name,
        result.trials.len(),
        result.best().map_or("none".to_string(), |b| format!("{b:.6}"))
    );
    Ok(())
}
