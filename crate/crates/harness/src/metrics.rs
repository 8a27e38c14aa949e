//! Calibration diagnostics over interval logs.
//!
//! A log holds, for every post-conformalization iteration of a calibration
//! run, the sampled configuration's features, the observed performance and
//! the interval of every monitored confidence.

use std::collections::{BTreeMap, BTreeSet};

use cqhpo_core::space::{encode, SpaceError};
use cqhpo_core::{CalibrationRun, Encoding, PairInterval, ParamSpace};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::stats::{average_ranks, percentile};

pub const DEFAULT_WINDOW: usize = 20;
pub const RIDGE: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 100;
pub const RANK_BOOTSTRAP: usize = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("log has {len} entries, fewer than one window of {window}")]
    TooShort { len: usize, window: usize },
    #[error("log is empty")]
    Empty,
    #[error("no interval at confidence {0} in entry {1}")]
    UnknownConfidence(f64, usize),
    #[error("entry {0}: breach flag disagrees with the interval")]
    InconsistentBreach(usize),
    #[error("variant `{variant}` has no value for dataset `{dataset}` at confidence {confidence}")]
    MissingCell { variant: String, dataset: String, confidence: f64 },
    #[error("no metric values")]
    NoCells,
    #[error(transparent)]
    Space(#[from] SpaceError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    /// Encoded configuration.
    pub features: Vec<f64>,
    pub observed: f64,
    pub intervals: Vec<PairInterval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalLog {
    entries: Vec<LogEntry>,
}

impl IntervalLog {
    pub fn new(entries: Vec<LogEntry>) -> Result<Self, MetricsError> {
        for (i, e) in entries.iter().enumerate() {
            if e.intervals.iter().any(|iv| iv.breached != !(iv.lo <= e.observed && e.observed <= iv.hi)) {
                return Err(MetricsError::InconsistentBreach(i));
            }
        }
        Ok(Self { entries })
    }

    /// The log of variant `variant` in a calibration run, with one-hot
    /// encoded configurations.
    pub fn from_run(run: &CalibrationRun, variant: usize, space: &ParamSpace) -> Result<Self, MetricsError> {
        let entries = run.variants[variant]
            .records
            .iter()
            .map(|r| {
                Ok(LogEntry {
                    features: encode(&run.trials[r.iteration].config, space, Encoding::OneHot)?,
                    observed: r.observed,
                    intervals: r.intervals.clone(),
                })
            })
            .collect::<Result<Vec<_>, MetricsError>>()?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn column(&self, confidence: f64) -> Result<Vec<&PairInterval>, MetricsError> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.intervals
                    .iter()
                    .find(|iv| (iv.confidence - confidence).abs() < 1e-9)
                    .ok_or(MetricsError::UnknownConfidence(confidence, i))
            })
            .collect()
    }
}

/// Mean absolute deviation of per-window coverage from `confidence` over
/// non-overlapping windows; a trailing partial window is dropped.
pub fn rolling_coverage_error(log: &IntervalLog, confidence: f64, window: usize) -> Result<f64, MetricsError> {
    let col = log.column(confidence)?;
    let windows = col.len() / window.max(1);
    if windows == 0 {
        return Err(MetricsError::TooShort { len: col.len(), window });
    }
    let total: f64 = col
        .chunks_exact(window)
        .map(|w| {
            let covered = w.iter().filter(|iv| !iv.breached).count() as f64 / window as f64;
            (covered - confidence).abs()
        })
        .sum();
    Ok(total / windows as f64)
}

/// Running coverage rate; element `t` averages the first `t + 1` entries.
pub fn cumulative_coverage(log: &IntervalLog, confidence: f64) -> Result<Vec<f64>, MetricsError> {
    let col = log.column(confidence)?;
    if col.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut covered = 0usize;
    Ok(col
        .iter()
        .enumerate()
        .map(|(t, iv)| {
            covered += usize::from(!iv.breached);
            covered as f64 / (t + 1) as f64
        })
        .collect())
}

pub fn mean_interval_width(log: &IntervalLog, confidence: f64) -> Result<f64, MetricsError> {
    let col = log.column(confidence)?;
    if col.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(col.iter().map(|iv| iv.hi - iv.lo).sum::<f64>() / col.len() as f64)
}

/// Likelihood-ratio statistic of a logistic regression of the breach flag
/// on the standardized features against the intercept-only model.
///
/// Fewer than two outcomes of either class leave nothing to estimate and
/// give 0.
pub fn llr_statistic(log: &IntervalLog, confidence: f64) -> Result<f64, MetricsError> {
    let col = log.column(confidence)?;
    let y: Vec<f64> = col.iter().map(|iv| f64::from(u8::from(iv.breached))).collect();
    let rows: Vec<&[f64]> = log.entries.iter().map(|e| e.features.as_slice()).collect();
    Ok(logistic_llr(&rows, &y))
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `2 (loglik_full - loglik_null)` for binary `y`, fitted by ridge-stabilized
/// IRLS with step halving.
pub fn logistic_llr(rows: &[&[f64]], y: &[f64]) -> f64 {
    let n = y.len();
    let positives = y.iter().filter(|v| **v > 0.5).count();
    if positives < 2 || n - positives < 2 {
        return 0.0;
    }
    let d = rows.first().map_or(0, |r| r.len());
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..d {
        let c: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let mean = c.iter().sum::<f64>() / n as f64;
        let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd > 1e-12 {
            cols.push(c.iter().map(|v| (v - mean) / sd).collect());
        }
    }
    let ybar = positives as f64 / n as f64;
    let null_ll = n as f64 * (ybar * ybar.ln() + (1.0 - ybar) * (1.0 - ybar).ln());
    if cols.is_empty() {
        return 0.0;
    }
    let p = cols.len() + 1;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let loglik = |beta: &DVector<f64>| -> f64 {
        let eta = &x * beta;
        eta.iter().zip(y).map(|(e, t)| t * e - softplus(*e)).sum()
    };
    let penalty = |beta: &DVector<f64>| 0.5 * RIDGE * beta.rows(1, p - 1).norm_squared();
    let mut beta = DVector::zeros(p);
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let mut objective = loglik(&beta) - penalty(&beta);
    for _ in 0..IRLS_MAX_ITER {
        let eta = &x * &beta;
        let mu: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let w: Vec<f64> = mu.iter().map(|m| (m * (1.0 - m)).max(1e-12)).collect();
        let mut grad = x.transpose() * (&yv - DVector::from_vec(mu));
        let mut hess = DMatrix::from_fn(p, p, |a, b| (0..n).map(|i| x[(i, a)] * w[i] * x[(i, b)]).sum::<f64>());
        for j in 1..p {
            grad[j] -= RIDGE * beta[j];
            hess[(j, j)] += RIDGE;
        }
        let Some(step) = hess.cholesky().map(|c| c.solve(&grad)) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-10 {
            let cand = &beta + &step * t;
            let val = loglik(&cand) - penalty(&cand);
            if val >= objective {
                let gain = val - objective;
                beta = cand;
                objective = val;
                improved = gain > 1e-10 * (1.0 + objective.abs());
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (2.0 * (loglik(&beta) - null_ll)).max(0.0)
}

/// One metric value of one variant in one (dataset, confidence) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricValue {
    pub variant: String,
    pub dataset: String,
    pub confidence: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRank {
    pub variant: String,
    pub mean_rank: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Ranks variants within every (dataset, confidence) cell (lower value is
/// better, ties share the average rank; NaN counts as worst), averages over
/// cells and bootstraps a 95% interval by resampling cells.
pub fn rank_metrics_across_variants<R: Rng + ?Sized>(
    values: &[MetricValue],
    n_boot: usize,
    rng: &mut R,
) -> Result<Vec<VariantRank>, MetricsError> {
    let variants: BTreeSet<&str> = values.iter().map(|v| v.variant.as_str()).collect();
    let variants: Vec<&str> = variants.into_iter().collect();
    let mut cells: BTreeMap<(String, u64), BTreeMap<&str, f64>> = BTreeMap::new();
    for v in values {
        cells
            .entry((v.dataset.clone(), v.confidence.to_bits()))
            .or_default()
            .insert(v.variant.as_str(), if v.value.is_nan() { f64::INFINITY } else { v.value });
    }
    if cells.is_empty() {
        return Err(MetricsError::NoCells);
    }
    let mut cell_ranks: Vec<Vec<f64>> = Vec::with_capacity(cells.len());
    for ((dataset, conf), by_variant) in &cells {
        let row = variants
            .iter()
            .map(|v| {
                by_variant.get(v).copied().ok_or_else(|| MetricsError::MissingCell {
                    variant: v.to_string(),
                    dataset: dataset.clone(),
                    confidence: f64::from_bits(*conf),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        cell_ranks.push(average_ranks(&row));
    }
    let c = cell_ranks.len();
    let mean_over = |idx: &mut dyn Iterator<Item = usize>, vi: usize| -> f64 {
        let mut s = 0.0;
        let mut k = 0;
        for i in idx {
            s += cell_ranks[i][vi];
            k += 1;
        }
        s / k as f64
    };
    let boots: Vec<Vec<f64>> = (0..n_boot)
        .map(|_| {
            let pick: Vec<usize> = (0..c).map(|_| rng.random_range(0..c)).collect();
            (0..variants.len()).map(|vi| mean_over(&mut pick.iter().copied(), vi)).collect()
        })
        .collect();
    Ok(variants
        .iter()
        .enumerate()
        .map(|(vi, v)| {
            let mean_rank = mean_over(&mut (0..c), vi);
            let (ci_lo, ci_hi) = if boots.is_empty() {
                (mean_rank, mean_rank)
            } else {
                let b: Vec<f64> = boots.iter().map(|r| r[vi]).collect();
                (percentile(&b, 0.025), percentile(&b, 0.975))
            };
            VariantRank { variant: v.to_string(), mean_rank, ci_lo, ci_hi }
        })
        .collect())
}
