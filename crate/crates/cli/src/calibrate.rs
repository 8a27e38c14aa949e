//! Calibration experiments: greedy runs logging the seven standard
//! conformal variants, summarized per (variant, dataset, confidence).
//!
//! Outputs under `<output>/calibration/`:
//! - `calibration_metrics.csv`: seed-averaged rolling coverage error, breach
//!   LLR and mean width;
//! - `calibration_ranks.csv`: mean rank of each variant per metric across
//!   (dataset, confidence) cells, with bootstrap intervals;
//! - `cumulative_coverage.csv`: running coverage per seed;
//! - `logs/<dataset>/seed_<n>.jsonl`: one interval log per variant.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use cqhpo_core::optimizer::MONITORED_CONFIDENCES;
use cqhpo_core::{greedy_calibration_run, CalibrationRun, CalibrationVariant, Objective, StudyConfig};
use cqhpo_harness::metrics::{
    cumulative_coverage, llr_statistic, mean_interval_width, rank_metrics_across_variants, rolling_coverage_error, DEFAULT_WINDOW, RANK_BOOTSTRAP,
};
use cqhpo_harness::{IntervalLog, MetricValue, VariantRank};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::manifest::{LoadedBenchmark, RunManifest};
use crate::{create_dir, csv_err, io_err, thread_pool, CliError};

/// Metric columns of the metrics CSV, in order.
pub const METRICS: [&str; 3] = ["rolling_cov_err", "llr", "mean_width"];

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrateSummary {
    pub output_dir: PathBuf,
    /// Per metric name, the variant ranks.
    pub ranks: BTreeMap<String, Vec<VariantRank>>,
}

/// Per-seed metric values of one variant at one confidence.
#[derive(Debug, Clone, Copy)]
struct SeedMetrics {
    values: [f64; 3],
}

struct SeedResult {
    dataset: String,
    seed: u64,
    run: CalibrationRun,
    /// `[variant][confidence]`
    metrics: Vec<Vec<SeedMetrics>>,
    /// `[variant][confidence]`
    coverage: Vec<Vec<Vec<f64>>>,
}

pub fn cmd_calibrate(manifest_path: &Path, workers: usize) -> Result<CalibrateSummary, CliError> {
    let manifest = RunManifest::load(manifest_path)?;
    let benches = manifest.load_benchmarks()?;
    let out = manifest.output_dir.join("calibration");
    create_dir(&out)?;
    let variants = CalibrationVariant::standard();

    let mut jobs = Vec::new();
    for b in &benches {
        for &s in &manifest.seeds.0 {
            jobs.push((b, s));
        }
    }
    log::info!("{} calibration runs over {} variants", jobs.len(), variants.len());
    let pool = thread_pool(workers)?;
    let results: Vec<Result<SeedResult, String>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(b, s)| {
                let config = StudyConfig { seed: s, ..manifest.calibration.study.clone() };
                calibrate_one(b, &config, &manifest, &variants).map_err(|e| format!("{}/seed_{s}: {e}", b.name))
            })
            .collect()
    });
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::StudyFailures(failures));
    }

    for r in &ok {
        write_log(&out, r)?;
    }
    write_coverage(&out.join("cumulative_coverage.csv"), &ok, &variants)?;
    let values = average_metrics(&ok, &variants, &benches);
    write_metrics(&out.join("calibration_metrics.csv"), &values)?;
    let mut ranks = BTreeMap::new();
    for (mi, name) in METRICS.iter().enumerate() {
        let cells: Vec<MetricValue> = values
            .iter()
            .map(|(v, d, c, m)| MetricValue { variant: v.clone(), dataset: d.clone(), confidence: *c, value: m[mi] })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mi as u64);
        ranks.insert(name.to_string(), rank_metrics_across_variants(&cells, RANK_BOOTSTRAP, &mut rng)?);
    }
    write_ranks(&out.join("calibration_ranks.csv"), &ranks)?;
    Ok(CalibrateSummary { output_dir: out, ranks })
}

fn calibrate_one(bench: &LoadedBenchmark, config: &StudyConfig, manifest: &RunManifest, variants: &[CalibrationVariant]) -> Result<SeedResult, CliError> {
    let run = greedy_calibration_run(&bench.bench, config, &manifest.calibration.surrogate, variants).map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut metrics = Vec::with_capacity(variants.len());
    let mut coverage = Vec::with_capacity(variants.len());
    for vi in 0..variants.len() {
        let log = IntervalLog::from_run(&run, vi, bench.bench.space())?;
        let mut m = Vec::new();
        let mut c = Vec::new();
        for &conf in &MONITORED_CONFIDENCES {
            // A log too short for the metric leaves a NaN, skipped when
            // averaging over seeds.
            let values = [
                rolling_coverage_error(&log, conf, DEFAULT_WINDOW).unwrap_or(f64::NAN),
                llr_statistic(&log, conf).unwrap_or(f64::NAN),
                mean_interval_width(&log, conf).unwrap_or(f64::NAN),
            ];
            m.push(SeedMetrics { values });
            c.push(cumulative_coverage(&log, conf).unwrap_or_default());
        }
        metrics.push(m);
        coverage.push(c);
    }
    log::info!("{}/seed_{}: {} logged points", bench.name, config.seed, run.variants.first().map_or(0, |v| v.records.len()));
    Ok(SeedResult { dataset: bench.name.clone(), seed: config.seed, run, metrics, coverage })
}

type Row = (String, String, f64, [f64; 3]);

/// Seed means per (variant, dataset, confidence), in benchmark order.
fn average_metrics(results: &[SeedResult], variants: &[CalibrationVariant], benches: &[LoadedBenchmark]) -> Vec<Row> {
    let mut rows = Vec::new();
    for b in benches {
        for (vi, v) in variants.iter().enumerate() {
            for (ci, &conf) in MONITORED_CONFIDENCES.iter().enumerate() {
                let mut means = [f64::NAN; 3];
                for (mi, mean) in means.iter_mut().enumerate() {
                    let vals: Vec<f64> = results
                        .iter()
                        .filter(|r| r.dataset == b.name)
                        .map(|r| r.metrics[vi][ci].values[mi])
                        .filter(|x| x.is_finite())
                        .collect();
                    if !vals.is_empty() {
                        *mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    }
                }
                rows.push((v.name.clone(), b.name.clone(), conf, means));
            }
        }
    }
    rows
}

fn write_metrics(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["variant", "dataset", "confidence"].iter().chain(METRICS.iter())).map_err(csv_err(path))?;
    for (v, d, c, m) in rows {
        w.write_record([v.clone(), d.clone(), c.to_string(), m[0].to_string(), m[1].to_string(), m[2].to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_ranks(path: &Path, ranks: &BTreeMap<String, Vec<VariantRank>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["metric", "variant", "mean_rank", "ci_lo", "ci_hi"]).map_err(csv_err(path))?;
    // Metric order follows the metrics CSV, not the map.
    for name in METRICS {
        for r in &ranks[name] {
            w.write_record([name.to_string(), r.variant.clone(), r.mean_rank.to_string(), r.ci_lo.to_string(), r.ci_hi.to_string()])
                .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn write_coverage(path: &Path, results: &[SeedResult], variants: &[CalibrationVariant]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["variant", "dataset", "seed", "confidence", "step", "coverage"]).map_err(csv_err(path))?;
    for r in results {
        for (vi, v) in variants.iter().enumerate() {
            for (ci, conf) in MONITORED_CONFIDENCES.iter().enumerate() {
                for (t, cov) in r.coverage[vi][ci].iter().enumerate() {
                    w.write_record([v.name.clone(), r.dataset.clone(), r.seed.to_string(), conf.to_string(), (t + 1).to_string(), cov.to_string()])
                        .map_err(csv_err(path))?;
                }
            }
        }
    }
    w.flush().map_err(io_err(path))
}

fn write_log(out: &Path, r: &SeedResult) -> Result<(), CliError> {
    let dir = out.join("logs").join(&r.dataset);
    create_dir(&dir)?;
    let path = dir.join(format!("seed_{}.jsonl", r.seed));
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_err(&path))?);
    for v in &r.run.variants {
        let line = serde_json::to_string(v).expect("variant logs serialize");
        writeln!(file, "{line}").map_err(io_err(&path))?;
    }
    file.flush().map_err(io_err(&path))
}
