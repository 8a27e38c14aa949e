//! Candidate scoring and selection.
//!
//! All functions work on per-candidate quantile grids: `M` sorted values at
//! the study's levels, conformalized or raw. Larger performance is better
//! throughout.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcquisitionError {
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error("invalid acquisition specification: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AcquisitionKind {
    /// Quantile Thompson sampling.
    #[serde(rename = "ts")]
    Ts,
    /// Optimistic Bayesian sampling: Thompson draw floored at the expectation.
    #[serde(rename = "obs")]
    Obs,
    /// Expected improvement over the best observed value.
    #[serde(rename = "ei")]
    Ei,
    /// Calibrated upper bound of a single central interval.
    #[serde(rename = "ucb_optimistic")]
    UcbOptimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EiMethod {
    IntervalUniform,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    pub ei_method: EiMethod,
    pub ei_mc_samples: usize,
    /// Miscoverage of the interval whose upper end the UCB score uses.
    pub ucb_alpha: f64,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self { kind: AcquisitionKind::Ts, ei_method: EiMethod::IntervalUniform, ei_mc_samples: 256, ucb_alpha: 0.2 }
    }
}

impl AcquisitionSpec {
    pub fn of(kind: AcquisitionKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), AcquisitionError> {
        if self.ei_mc_samples == 0 {
            return Err(AcquisitionError::InvalidSpec("ei_mc_samples must be at least 1".into()));
        }
        if !(self.ucb_alpha > 0.0 && self.ucb_alpha < 1.0) {
            return Err(AcquisitionError::InvalidSpec(format!("ucb_alpha must lie in (0, 1), got {}", self.ucb_alpha)));
        }
        Ok(())
    }
}

/// One uniform quantile index per candidate.
pub fn thompson_indices<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..m)).collect()
}

pub fn thompson_scores<R: Rng + ?Sized>(grids: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
    grids.iter().map(|g| g[rng.random_range(0..g.len())]).collect()
}

/// Optimistic sampling with the index draws supplied, so that it can be
/// coupled with [`thompson_scores`].
pub fn obs_with_indices(grids: &[Vec<f64>], expectations: &[f64], indices: &[usize]) -> Vec<f64> {
    grids.iter().zip(expectations).zip(indices).map(|((g, &e), &j)| g[j].max(e)).collect()
}

pub fn obs_scores<R: Rng + ?Sized>(grids: &[Vec<f64>], expectations: &[f64], rng: &mut R) -> Vec<f64> {
    grids
        .iter()
        .zip(expectations)
        .map(|(g, &e)| g[rng.random_range(0..g.len())].max(e))
        .collect()
}

/// A piecewise-uniform distribution: segment `k` spans `[a_k, b_k]` and
/// carries mass `m_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    pub bounds: Vec<(f64, f64)>,
    pub masses: Vec<f64>,
}

/// Piecewise-uniform distribution implied by a sorted grid at levels `taus`.
/// Adjacent quantiles enclose mass `tau[i+1] - tau[i]`. The mass below the
/// first and above the last quantile is spread uniformly with the density
/// of the neighbouring interior segment; with a single pair, the tails
/// mirror the central width.
pub fn segments(grid: &[f64], taus: &[f64]) -> Segments {
    let m = grid.len();
    let mut bounds = Vec::with_capacity(m + 1);
    let mut masses = Vec::with_capacity(m + 1);
    let width = |i: usize| grid[i + 1] - grid[i];
    let mass = |i: usize| taus[i + 1] - taus[i];
    let left_w = taus[0] * width(0) / mass(0);
    let right_w = (1.0 - taus[m - 1]) * width(m - 2) / mass(m - 2);
    bounds.push((grid[0] - left_w, grid[0]));
    masses.push(taus[0]);
    for i in 0..m - 1 {
        bounds.push((grid[i], grid[i + 1]));
        masses.push(mass(i));
    }
    bounds.push((grid[m - 1], grid[m - 1] + right_w));
    masses.push(1.0 - taus[m - 1]);
    Segments { bounds, masses }
}

impl Segments {
    pub fn mean(&self) -> f64 {
        self.bounds.iter().zip(&self.masses).map(|(&(a, b), m)| m * (a + (b - a) / 2.0)).sum()
    }

    /// Inverse CDF at `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut cum = 0.0;
        for (&(a, b), &m) in self.bounds.iter().zip(&self.masses) {
            if m <= 0.0 {
                continue;
            }
            if u < cum + m {
                return a + (b - a) * ((u - cum) / m).clamp(0.0, 1.0);
            }
            cum += m;
        }
        self.bounds.last().map_or(f64::NAN, |&(_, b)| b)
    }

    /// `E[max(V - f_star, 0)]` in closed form.
    pub fn expected_improvement(&self, f_star: f64) -> f64 {
        self.bounds
            .iter()
            .zip(&self.masses)
            .map(|(&(a, b), &m)| {
                if f_star >= b {
                    0.0
                } else if f_star <= a {
                    m * (a + (b - a) / 2.0 - f_star)
                } else {
                    m * (b - f_star).powi(2) / (2.0 * (b - a))
                }
            })
            .sum()
    }
}

pub fn ei_interval_uniform(grid: &[f64], taus: &[f64], f_star: f64) -> f64 {
    segments(grid, taus).expected_improvement(f_star).max(0.0)
}

/// Stratified Monte-Carlo estimate of the same expectation: one jittered
/// inverse-CDF draw in each of `samples` equal-probability strata.
pub fn ei_monte_carlo<R: Rng + ?Sized>(grid: &[f64], taus: &[f64], f_star: f64, samples: usize, rng: &mut R) -> f64 {
    let seg = segments(grid, taus);
    let s = samples as f64;
    (0..samples)
        .map(|k| {
            let u = (k as f64 + rng.random::<f64>()) / s;
            (seg.quantile(u.min(1.0 - 1e-16)) - f_star).max(0.0)
        })
        .sum::<f64>()
        / s
}

/// Scores every candidate. `grids` are sorted per candidate, `taus` are the
/// grid levels and `f_star` the best performance observed so far.
pub fn score_candidates<R: Rng + ?Sized>(
    spec: &AcquisitionSpec,
    grids: &[Vec<f64>],
    expectations: &[f64],
    taus: &[f64],
    f_star: f64,
    rng: &mut R,
) -> Vec<f64> {
    match spec.kind {
        AcquisitionKind::Ts => thompson_scores(grids, rng),
        AcquisitionKind::Obs => obs_scores(grids, expectations, rng),
        AcquisitionKind::Ei => match spec.ei_method {
            EiMethod::IntervalUniform => grids.iter().map(|g| ei_interval_uniform(g, taus, f_star)).collect(),
            EiMethod::MonteCarlo => grids.iter().map(|g| ei_monte_carlo(g, taus, f_star, spec.ei_mc_samples, rng)).collect(),
        },
        AcquisitionKind::UcbOptimistic => grids.iter().map(|g| g[g.len() - 1]).collect(),
    }
}

/// Index of the largest score; ties go to the lowest index and NaN scores
/// never win.
pub fn select_next(scores: &[f64]) -> Result<usize, AcquisitionError> {
    if scores.is_empty() {
        return Err(AcquisitionError::EmptyCandidates);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_nan() && best.is_none_or(|(_, v)| s > v) {
            best = Some((i, s));
        }
    }
    Ok(best.map_or(0, |(i, _)| i))
}
