//! Dataset stratification screens.
//!
//! Each screen scores a benchmark on one property (cost, heteroskedasticity,
//! conditional asymmetry) from a random sample of its rows. Samples are
//! drawn without replacement and capped at the table size.

use cqhpo_core::surrogates::{fit_surrogate, GpParams};
use cqhpo_core::{FeatureSet, Objective, QuantileLevels, SurrogateSpec};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::ols_adjusted_r2;
use crate::tabular::TabularBenchmark;

pub const DEFAULT_SAMPLE: usize = 10_000;
/// Rows used to fit the heteroskedasticity screen's Gaussian process.
pub const GP_MAX_ROWS: usize = 1000;
pub const DEFAULT_NEIGHBORS: usize = 50;
pub const MIN_NEIGHBORS: usize = 10;

#[derive(Debug, Error)]
pub enum ScreenError {
    #[error("benchmark `{0}` has no runtime column")]
    MissingRuntime(String),
    #[error("benchmark `{0}` has too few rows for this screen")]
    TooFewRows(String),
    #[error("k_neighbors must be at least {MIN_NEIGHBORS}, got {0}")]
    Neighbors(usize),
    #[error("screen failed: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Screen {
    Size,
    Hetero,
    Asym,
}

/// Indices of up to `n_sample` distinct rows.
fn sample_rows<R: Rng + ?Sized>(bench: &TabularBenchmark, n_sample: usize, rng: &mut R) -> Vec<usize> {
    let n = n_sample.min(bench.len());
    sample(rng, bench.len(), n).into_vec()
}

fn features(bench: &TabularBenchmark, rows: &[usize]) -> Result<FeatureSet, ScreenError> {
    let configs: Vec<_> = rows.iter().map(|&i| bench.configs()[i].clone()).collect();
    FeatureSet::encode(bench.space(), &configs).map_err(|e| ScreenError::Model(e.to_string()))
}

/// Mean runtime of the sampled rows.
pub fn screen_size<R: Rng + ?Sized>(bench: &TabularBenchmark, n_sample: usize, rng: &mut R) -> Result<f64, ScreenError> {
    if !bench.has_runtimes() || bench.is_empty() {
        return Err(ScreenError::MissingRuntime(bench.name().into()));
    }
    let rows = sample_rows(bench, n_sample, rng);
    let total: f64 = rows.iter().map(|&i| bench.get(&bench.configs()[i]).and_then(|e| e.runtime_seconds).unwrap_or(0.0)).sum();
    Ok(total / rows.len() as f64)
}

/// Adjusted R² of squared Gaussian-process residuals regressed on the
/// one-hot encoded configurations.
pub fn screen_heteroskedasticity<R: Rng + ?Sized>(bench: &TabularBenchmark, n_sample: usize, rng: &mut R) -> Result<f64, ScreenError> {
    let rows = sample_rows(bench, n_sample, rng);
    if rows.len() < 10 {
        return Err(ScreenError::TooFewRows(bench.name().into()));
    }
    let x = features(bench, &rows)?;
    let y: Vec<f64> = rows.iter().map(|&i| bench.get(&bench.configs()[i]).expect("row exists").performance).collect();
    let fit_rows: Vec<usize> = if rows.len() > GP_MAX_ROWS {
        let mut idx = sample(rng, rows.len(), GP_MAX_ROWS).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..rows.len()).collect()
    };
    let fit_y: Vec<f64> = fit_rows.iter().map(|&i| y[i]).collect();
    let levels = QuantileLevels::uniform(2).expect("two levels");
    let model = fit_surrogate(&SurrogateSpec::Qgp(GpParams::default()), &x.subset(&fit_rows), &fit_y, &levels, rng.random())
        .map_err(|e| ScreenError::Model(e.to_string()))?;
    let mean = model.predict_mean(&x);
    let sq: Vec<f64> = y.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).collect();
    ols_adjusted_r2(x.view(cqhpo_core::Encoding::OneHot), &sq).map_err(|e| ScreenError::Model(e.to_string()))
}

/// Bowley skew `((q75 - q50) - (q50 - q25)) / (q75 - q25)`, 0 for a zero IQR.
pub fn bowley_skew(values: &[f64]) -> f64 {
    let q = |p| crate::stats::percentile(values, p);
    let (q25, q50, q75) = (q(0.25), q(0.5), q(0.75));
    let iqr = q75 - q25;
    if iqr <= 0.0 {
        0.0
    } else {
        ((q75 - q50) - (q50 - q25)) / iqr
    }
}

/// Mean absolute Bowley skew of the performances of each sampled row's `k`
/// nearest sampled neighbours (Euclidean, one-hot encoding, the row itself
/// excluded).
pub fn screen_asymmetry<R: Rng + ?Sized>(bench: &TabularBenchmark, n_sample: usize, k: usize, rng: &mut R) -> Result<f64, ScreenError> {
    if k < MIN_NEIGHBORS {
        return Err(ScreenError::Neighbors(k));
    }
    let rows = sample_rows(bench, n_sample, rng);
    if rows.len() <= k {
        return Err(ScreenError::TooFewRows(bench.name().into()));
    }
    let x = features(bench, &rows)?;
    let pts = x.view(cqhpo_core::Encoding::OneHot);
    let y: Vec<f64> = rows.iter().map(|&i| bench.get(&bench.configs()[i]).expect("row exists").performance).collect();
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(pts.len());
    let mut neigh = Vec::with_capacity(k);
    let mut total = 0.0;
    for (i, p) in pts.iter().enumerate() {
        dist.clear();
        dist.extend(
            pts.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, q)| (p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), j)),
        );
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        neigh.clear();
        neigh.extend(dist[..k].iter().map(|&(_, j)| y[j]));
        total += bowley_skew(&neigh).abs();
    }
    Ok(total / pts.len() as f64)
}

/// Runs `screen` with its default sample size and neighbourhood.
pub fn run_screen<R: Rng + ?Sized>(screen: Screen, bench: &TabularBenchmark, rng: &mut R) -> Result<f64, ScreenError> {
    match screen {
        Screen::Size => screen_size(bench, DEFAULT_SAMPLE, rng),
        Screen::Hetero => screen_heteroskedasticity(bench, DEFAULT_SAMPLE, rng),
        Screen::Asym => screen_asymmetry(bench, DEFAULT_SAMPLE, DEFAULT_NEIGHBORS, rng),
    }
}
