//! Quantile surrogates.
//!
//! Every architecture fits the full set of [`QuantileLevels`] at once and is
//! used through the object-safe [`QuantileModel`] trait. [`fit_surrogate`]
//! dispatches on a [`SurrogateSpec`] and applies the small-sample guard:
//! fewer than [`MIN_FIT_ROWS`] rows always yield a constant
//! empirical-quantile model.

mod ensemble;
mod forest;
mod gbm;
mod gp;
mod lasso;
pub mod linprog;
mod optim;
pub mod tree;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Encoding, FeatureDims, FeatureSet};

pub use ensemble::{fit_stacked_ensemble, EnsembleParams, StackedEnsemble, StackingDiagnostics};
pub use forest::{fit_qrf, ForestParams, QuantileForest};
pub use gbm::{fit_qgbm, fit_qgbm_single, GbmParams, QuantileGbm};
pub use gp::{fit_qgp, GpParams, QuantileGp};
pub use lasso::{fit_quantile_lasso, LassoParams, LinearQuantile, QuantileLasso};

/// Below this many training rows every architecture degrades to a constant
/// empirical-quantile predictor.
pub const MIN_FIT_ROWS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("no training rows")]
    EmptyData,
    #[error("feature rows ({rows}) and targets ({targets}) differ in length")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("candidate features have dims {got:?}, model was trained on {expected:?}")]
    DimensionMismatch { expected: FeatureDims, got: FeatureDims },
    #[error("invalid quantile level {0}: must lie in (0, 1)")]
    InvalidLevel(f64),
    #[error("invalid quantile grid: {0}")]
    InvalidLevels(String),
    #[error("invalid surrogate specification: {0}")]
    InvalidSpec(String),
    #[error("kernel matrix not positive definite after jitter escalation")]
    NotPositiveDefinite,
    #[error("every ensemble member failed to fit")]
    AllMembersFailed,
    #[error("linear program solver failed: {0}")]
    Solver(String),
}

/// Strictly increasing, symmetric quantile levels (`tau[i] + tau[M-1-i] = 1`)
/// with even `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileLevels {
    taus: Vec<f64>,
}

/// A symmetric pair of quantile indices and its nominal miscoverage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantilePair {
    pub lower: usize,
    pub upper: usize,
    pub alpha: f64,
}

impl QuantilePair {
    pub fn confidence(&self) -> f64 {
        1.0 - self.alpha
    }
}

impl QuantileLevels {
    pub fn new(taus: Vec<f64>) -> Result<Self, SurrogateError> {
        let m = taus.len();
        if m < 2 || m % 2 != 0 {
            return Err(SurrogateError::InvalidLevels(format!("need an even number of levels, got {m}")));
        }
        for &t in &taus {
            if !(t > 0.0 && t < 1.0) {
                return Err(SurrogateError::InvalidLevel(t));
            }
        }
        if taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SurrogateError::InvalidLevels("levels must be strictly increasing".into()));
        }
        for i in 0..m / 2 {
            if (taus[i] + taus[m - 1 - i] - 1.0).abs() > 1e-9 {
                return Err(SurrogateError::InvalidLevels(format!(
                    "levels {} and {} are not symmetric",
                    taus[i],
                    taus[m - 1 - i]
                )));
            }
        }
        Ok(Self { taus })
    }

    /// `M` evenly spaced levels `i / (M + 1)`, `i = 1..=M`.
    pub fn uniform(m: usize) -> Result<Self, SurrogateError> {
        Self::new((1..=m).map(|i| i as f64 / (m + 1) as f64).collect())
    }

    /// Levels whose symmetric pairs are exactly the central intervals at the
    /// given confidences.
    pub fn from_confidences(confidences: &[f64]) -> Result<Self, SurrogateError> {
        let mut taus = Vec::with_capacity(2 * confidences.len());
        for &c in confidences {
            if !(c > 0.0 && c < 1.0) {
                return Err(SurrogateError::InvalidLevel(c));
            }
            taus.push((1.0 - c) / 2.0);
            taus.push((1.0 + c) / 2.0);
        }
        taus.sort_by(f64::total_cmp);
        Self::new(taus)
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// Symmetric pairs, outermost first.
    pub fn pairs(&self) -> Vec<QuantilePair> {
        let m = self.taus.len();
        (0..m / 2)
            .map(|i| QuantilePair {
                lower: i,
                upper: m - 1 - i,
                alpha: 1.0 - (self.taus[m - 1 - i] - self.taus[i]),
            })
            .collect()
    }
}

/// Per-candidate predicted quantiles, sorted ascending per candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantilePrediction {
    pub levels: QuantileLevels,
    pub values: Vec<Vec<f64>>,
}

/// A fitted quantile surrogate.
pub trait QuantileModel: Send + Sync + fmt::Debug {
    fn levels(&self) -> &QuantileLevels;

    /// Feature dimensions seen at fit time.
    fn dims(&self) -> FeatureDims;

    /// Raw predictions, one `M`-vector per row, possibly crossing.
    fn predict_raw(&self, x: &FeatureSet) -> Vec<Vec<f64>>;

    /// Conditional expectation proxy: mean of the repaired quantiles.
    fn predict_mean(&self, x: &FeatureSet) -> Vec<f64> {
        self.predict_raw(x)
            .into_iter()
            .map(|q| q.iter().sum::<f64>() / q.len() as f64)
            .collect()
    }
}

/// Architecture and hyperparameters of a surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "snake_case")]
pub enum SurrogateSpec {
    Ql(LassoParams),
    Qgbm(GbmParams),
    Qrf(ForestParams),
    Qgp(GpParams),
    Qe(EnsembleParams),
}

impl SurrogateSpec {
    pub fn qgbm() -> Self {
        SurrogateSpec::Qgbm(GbmParams::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            SurrogateSpec::Ql(_) => "QL",
            SurrogateSpec::Qgbm(_) => "QGBM",
            SurrogateSpec::Qrf(_) => "QRF",
            SurrogateSpec::Qgp(_) => "QGP",
            SurrogateSpec::Qe(_) => "QE",
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        match self {
            SurrogateSpec::Ql(p) => p.validate(),
            SurrogateSpec::Qgbm(p) => p.validate(),
            SurrogateSpec::Qrf(p) => p.validate(),
            SurrogateSpec::Qgp(p) => p.validate(),
            SurrogateSpec::Qe(p) => p.validate(),
        }
    }
}

/// Fits the architecture described by `spec` on `(x, y)` for every level.
pub fn fit_surrogate(
    spec: &SurrogateSpec,
    x: &FeatureSet,
    y: &[f64],
    levels: &QuantileLevels,
    seed: u64,
) -> Result<Box<dyn QuantileModel>, SurrogateError> {
    check_training_data(x, y)?;
    spec.validate()?;
    if y.len() < MIN_FIT_ROWS {
        return Ok(Box::new(ConstantQuantiles::fit(x.dims(), y, levels)));
    }
    Ok(match spec {
        SurrogateSpec::Ql(p) => Box::new(QuantileLasso::fit(x, y, levels, p)?),
        SurrogateSpec::Qgbm(p) => Box::new(fit_qgbm(x, y, levels, p, seed)?),
        SurrogateSpec::Qrf(p) => Box::new(fit_qrf(x, y, levels, p, seed)?),
        SurrogateSpec::Qgp(p) => Box::new(fit_qgp(x, y, levels, p, seed)?),
        SurrogateSpec::Qe(p) => Box::new(fit_stacked_ensemble(x, y, levels, p, seed)?),
    })
}

pub(crate) fn check_training_data(x: &FeatureSet, y: &[f64]) -> Result<(), SurrogateError> {
    if y.is_empty() {
        return Err(SurrogateError::EmptyData);
    }
    if x.len() != y.len() {
        return Err(SurrogateError::LengthMismatch { rows: x.len(), targets: y.len() });
    }
    let finite_rows = x.one_hot.iter().chain(&x.ordinal).all(|r| r.iter().all(|v| v.is_finite()));
    if !finite_rows || !y.iter().all(|v| v.is_finite()) {
        return Err(SurrogateError::NonFinite);
    }
    Ok(())
}

/// Predicts all levels for every candidate and repairs crossings by sorting
/// each candidate's quantiles.
pub fn predict_quantiles(model: &dyn QuantileModel, candidates: &FeatureSet) -> Result<QuantilePrediction, SurrogateError> {
    check_dims(model, candidates)?;
    let mut values = model.predict_raw(candidates);
    for row in &mut values {
        repair_crossing(row);
    }
    Ok(QuantilePrediction { levels: model.levels().clone(), values })
}

/// Per-candidate expectation proxy (posterior mean for the Gaussian process).
pub fn predict_expectation(model: &dyn QuantileModel, candidates: &FeatureSet) -> Result<Vec<f64>, SurrogateError> {
    check_dims(model, candidates)?;
    Ok(model.predict_mean(candidates))
}

fn check_dims(model: &dyn QuantileModel, candidates: &FeatureSet) -> Result<(), SurrogateError> {
    if candidates.is_empty() {
        return Ok(());
    }
    let got = candidates.dims();
    let expected = model.dims();
    if got != expected {
        return Err(SurrogateError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Sorts quantile values ascending.
pub fn repair_crossing(values: &mut [f64]) {
    values.sort_by(f64::total_cmp);
}

/// Pinball loss of residual `u = y - prediction` at level `beta`.
pub fn pinball_loss(u: f64, beta: f64) -> Result<f64, SurrogateError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(SurrogateError::InvalidLevel(beta));
    }
    Ok(pinball(u, beta))
}

#[inline]
pub(crate) fn pinball(u: f64, beta: f64) -> f64 {
    if u > 0.0 {
        u * beta
    } else {
        u * (beta - 1.0)
    }
}

/// Mean pinball loss of `predictions` against `y`.
pub fn mean_pinball(y: &[f64], predictions: &[f64], beta: f64) -> f64 {
    y.iter().zip(predictions).map(|(t, p)| pinball(t - p, beta)).sum::<f64>() / y.len() as f64
}

/// Lower empirical quantile: the `ceil(n * tau)`-th order statistic, which
/// minimizes the mean pinball loss over constants.
pub fn empirical_quantile(values: &[f64], tau: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted_quantile(&sorted, tau)
}

pub(crate) fn sorted_quantile(sorted: &[f64], tau: f64) -> f64 {
    let n = sorted.len();
    let rank = ((n as f64) * tau - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Weighted lower quantile: smallest value whose cumulative weight reaches
/// `tau`. `order` must sort `values` ascending; weights must sum to one.
pub(crate) fn weighted_quantile(values: &[f64], weights: &[f64], order: &[usize], tau: f64) -> f64 {
    let mut cum = 0.0;
    let mut last = f64::NAN;
    for &i in order {
        if weights[i] <= 0.0 {
            continue;
        }
        cum += weights[i];
        last = values[i];
        if cum >= tau - 1e-12 {
            return values[i];
        }
    }
    last
}

/// Constant predictor returning the empirical quantiles of the training
/// targets.
#[derive(Debug, Clone)]
pub struct ConstantQuantiles {
    levels: QuantileLevels,
    dims: FeatureDims,
    values: Vec<f64>,
}

impl ConstantQuantiles {
    pub fn fit(dims: FeatureDims, y: &[f64], levels: &QuantileLevels) -> Self {
        let mut sorted = y.to_vec();
        sorted.sort_by(f64::total_cmp);
        let values = levels.taus().iter().map(|&t| sorted_quantile(&sorted, t)).collect();
        Self { levels: levels.clone(), dims, values }
    }
}

impl QuantileModel for ConstantQuantiles {
    fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    fn dims(&self) -> FeatureDims {
        self.dims
    }

    fn predict_raw(&self, x: &FeatureSet) -> Vec<Vec<f64>> {
        vec![self.values.clone(); x.len()]
    }
}

/// Which view of a [`FeatureSet`] each architecture reads.
pub fn preferred_encoding(spec: &SurrogateSpec) -> Option<Encoding> {
    match spec {
        SurrogateSpec::Qgbm(_) | SurrogateSpec::Qrf(_) => Some(Encoding::Ordinal),
        SurrogateSpec::Ql(_) | SurrogateSpec::Qgp(_) => Some(Encoding::OneHot),
        SurrogateSpec::Qe(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinball_matches_direct_formula() {
        assert!((pinball_loss(2.0, 0.9).unwrap() - 1.8).abs() < 1e-12);
        assert!((pinball_loss(-2.0, 0.9).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(pinball_loss(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(pinball_loss(1.0, 1.0), Err(SurrogateError::InvalidLevel(1.0)));
        assert_eq!(pinball_loss(1.0, 0.0), Err(SurrogateError::InvalidLevel(0.0)));
    }

    #[test]
    fn uniform_levels_are_symmetric() {
        let l = QuantileLevels::uniform(4).unwrap();
        assert_eq!(l.taus(), &[0.2, 0.4, 0.6, 0.8]);
        let pairs = l.pairs();
        assert_eq!(pairs.len(), 2);
        assert_eq!((pairs[0].lower, pairs[0].upper), (0, 3));
        assert!((pairs[0].alpha - 0.4).abs() < 1e-12);
        assert!((pairs[1].alpha - 0.8).abs() < 1e-12);
        assert!(QuantileLevels::uniform(3).is_err());
        assert!(QuantileLevels::new(vec![0.1, 0.8]).is_err());
    }

    #[test]
    fn confidence_levels_give_matching_pairs() {
        let l = QuantileLevels::from_confidences(&[0.25, 0.5, 0.75]).unwrap();
        assert_eq!(l.len(), 6);
        let conf: Vec<f64> = l.pairs().iter().map(|p| p.confidence()).collect();
        assert!((conf[0] - 0.75).abs() < 1e-12);
        assert!((conf[1] - 0.5).abs() < 1e-12);
        assert!((conf[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sort_repair_uncrosses() {
        let mut q = vec![0.3, 0.1];
        repair_crossing(&mut q);
        assert_eq!(q, vec![0.1, 0.3]);
    }

    #[test]
    fn empirical_quantile_is_pinball_minimizer() {
        let y = [5.0, 1.0, 3.0, 2.0, 4.0, 9.0, 7.0, 8.0, 6.0, 10.0];
        assert_eq!(empirical_quantile(&y, 0.3), 3.0);
        assert_eq!(empirical_quantile(&y, 0.35), 4.0);
        assert_eq!(empirical_quantile(&y, 0.99), 10.0);
        // Brute force over candidate constants.
        for &tau in &[0.1, 0.25, 0.5, 0.77, 0.9] {
            let q = empirical_quantile(&y, tau);
            let best = y
                .iter()
                .map(|&c| mean_pinball(&y, &vec![c; y.len()], tau))
                .fold(f64::INFINITY, f64::min);
            assert!((mean_pinball(&y, &vec![q; y.len()], tau) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_training_sets_fall_back_to_constant() {
        let x = FeatureSet::numeric(vec![vec![0.0], vec![0.5], vec![1.0]]);
        let y = [1.0, 2.0, 3.0];
        let levels = QuantileLevels::uniform(2).unwrap();
        let m = fit_surrogate(&SurrogateSpec::qgbm(), &x, &y, &levels, 0).unwrap();
        let p = predict_quantiles(m.as_ref(), &FeatureSet::numeric(vec![vec![0.2], vec![0.9]])).unwrap();
        assert_eq!(p.values[0], p.values[1]);
        assert_eq!(p.values[0], vec![1.0, 2.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let x = FeatureSet::numeric((0..10).map(|i| vec![i as f64 / 10.0]).collect());
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let levels = QuantileLevels::uniform(2).unwrap();
        let m = fit_surrogate(&SurrogateSpec::qgbm(), &x, &y, &levels, 0).unwrap();
        let bad = FeatureSet::numeric(vec![vec![0.1, 0.2]]);
        assert!(matches!(predict_quantiles(m.as_ref(), &bad), Err(SurrogateError::DimensionMismatch { .. })));
    }

    #[test]
    fn expectation_is_mean_of_quantiles() {
        let levels = QuantileLevels::uniform(4).unwrap();
        let m = ConstantQuantiles { levels, dims: FeatureDims { one_hot: 1, ordinal: 1 }, values: vec![1.0, 2.0, 3.0, 4.0] };
        let e = predict_expectation(&m, &FeatureSet::numeric(vec![vec![0.0]])).unwrap();
        assert_eq!(e, vec![2.5]);
    }
}
