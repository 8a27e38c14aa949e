//! Benchmark stratification: score lookup tables with a screen, rank them
//! and keep the top few in a fresh manifest.

use std::path::{Path, PathBuf};

use cqhpo_harness::screens::run_screen;
use cqhpo_harness::{load_tabular, Screen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{io_err, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct StratifyOptions {
    pub screen: Screen,
    pub top: usize,
    pub seed: u64,
    /// Manifest to write.
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifyRow {
    pub name: String,
    pub path: PathBuf,
    pub score: f64,
}

#[derive(Serialize)]
struct Bench<'a> {
    path: &'a Path,
    name: &'a str,
}

#[derive(Serialize)]
struct Stratified<'a> {
    output_dir: &'a str,
    seeds: u64,
    benchmarks: Vec<Bench<'a>>,
}

/// Scores every benchmark, returns them best first and writes the top-K
/// manifest. Each table is screened with its own generator seeded by
/// `seed`, so scores do not depend on argument order.
pub fn cmd_stratify(paths: &[PathBuf], opts: &StratifyOptions) -> Result<Vec<StratifyRow>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Invalid("stratify needs at least one benchmark".into()));
    }
    if opts.top == 0 {
        return Err(CliError::Invalid("--top must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(paths.len());
    for p in paths {
        let bench = load_tabular(p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let score = run_screen(opts.screen, &bench, &mut rng)?;
        let path = std::path::absolute(p).map_err(io_err(p))?;
        rows.push(StratifyRow { name: bench.name().to_string(), path, score });
    }
    rows.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
    if opts.top > rows.len() {
        log::warn!("--top {} exceeds the {} benchmarks given; keeping all", opts.top, rows.len());
    }
    let kept = &rows[..opts.top.min(rows.len())];
    let manifest = Stratified {
        output_dir: "results",
        seeds: 10,
        benchmarks: kept.iter().map(|r| Bench { path: &r.path, name: &r.name }).collect(),
    };
    let screen = match opts.screen {
        Screen::Size => "size",
        Screen::Hetero => "hetero",
        Screen::Asym => "asym",
    };
    let mut text = format!("# top {} of {} benchmarks by the {screen} screen\n", kept.len(), rows.len());
    text.push_str(&toml::to_string(&manifest).map_err(|e| CliError::Invalid(e.to_string()))?);
    if let Some(dir) = opts.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        crate::create_dir(dir)?;
    }
    std::fs::write(&opts.output, text).map_err(io_err(&opts.output))?;
    Ok(rows)
}
