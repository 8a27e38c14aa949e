//! Conformal calibration of symmetric quantile pairs.
//!
//! A [`Conformalizer`] wraps the fitted surrogate(s) together with the
//! nonconformity scores of every symmetric pair. Predicting for a batch of
//! candidates yields [`CandidateIntervals`], from which the calibrated
//! interval of any pair can be read at any miscoverage level without
//! refitting. That is what the adaptive controllers and the feedback
//! bisection need.

use std::sync::Arc;

use thiserror::Error;

use crate::space::FeatureSet;
use crate::surrogates::{
    fit_surrogate, predict_expectation, predict_quantiles, QuantileLevels, QuantileModel, QuantilePair, SurrogateError,
    SurrogateSpec,
};

/// Effective miscoverage is clamped into this range before any interval is
/// built.
pub const ALPHA_BOUNDS: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("cv+ needs at least 2 folds and one row per fold (folds {folds}, rows {rows})")]
    Folds { folds: usize, rows: usize },
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

pub fn clamp_alpha(alpha: f64) -> f64 {
    alpha.clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1)
}

/// A calibrated interval for one candidate and one symmetric pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedInterval {
    pub lo: f64,
    pub hi: f64,
    pub nominal_alpha: f64,
    pub effective_alpha: f64,
}

impl CalibratedInterval {
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Split-conformal nonconformity score of one calibration point.
pub fn nonconformity(q_lo: f64, q_hi: f64, y: f64) -> f64 {
    (q_lo - y).max(y - q_hi)
}

/// Scores of a calibration set for one pair.
pub fn scp_scores(q_lo: &[f64], q_hi: &[f64], y: &[f64]) -> Result<Vec<f64>, ConformalError> {
    if y.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    Ok(y.iter().zip(q_lo).zip(q_hi).map(|((&t, &lo), &hi)| nonconformity(lo, hi, t)).collect())
}

/// One-based rank `ceil((1 - alpha)(n + 1))`, clamped to `[1, n]`. Ranks
/// beyond `n` would call for an infinite adjustment; the largest score is
/// used instead.
pub fn conservative_rank(n: usize, alpha: f64) -> usize {
    let r = ((1.0 - alpha) * (n as f64 + 1.0) - 1e-9).ceil();
    (r.max(1.0) as usize).min(n)
}

/// The conservative `(1 - alpha)` order statistic of ascending `sorted`.
pub fn conformal_quantile(sorted: &[f64], alpha: f64) -> f64 {
    sorted[conservative_rank(sorted.len(), alpha) - 1]
}

fn finish(mut lo: f64, mut hi: f64, nominal: f64, effective: f64) -> CalibratedInterval {
    if lo > hi {
        log::trace!("calibrated interval crossed ({lo} > {hi}); collapsing to midpoint");
        let mid = lo + (hi - lo) / 2.0;
        lo = mid;
        hi = mid;
    }
    CalibratedInterval { lo, hi, nominal_alpha: nominal, effective_alpha: effective }
}

/// `[q_lo - s, q_hi + s]` with `s` the conservative score quantile.
pub fn scp_interval(q_lo: f64, q_hi: f64, sorted_scores: &[f64], nominal_alpha: f64, alpha_eff: f64) -> CalibratedInterval {
    let a = clamp_alpha(alpha_eff);
    let s = conformal_quantile(sorted_scores, a);
    finish(q_lo - s, q_hi + s, nominal_alpha, a)
}

/// CV+ bounds from the sorted adjusted sets `{Q_lo(x) - D_i}` and
/// `{Q_hi(x) + D_i}`: the upper end is the conservative `(1 - alpha)` order
/// statistic of the upper set, the lower end the mirrored statistic of the
/// lower set.
pub fn cvplus_interval(lower_sorted: &[f64], upper_sorted: &[f64], nominal_alpha: f64, alpha_eff: f64) -> CalibratedInterval {
    let a = clamp_alpha(alpha_eff);
    let n = upper_sorted.len();
    let r = conservative_rank(n, a);
    finish(lower_sorted[n - r], upper_sorted[r - 1], nominal_alpha, a)
}

/// How intervals are calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Raw surrogate quantiles.
    Raw,
    /// Chronological split: the first two thirds train, the rest calibrate.
    Split,
    /// Round-robin K-fold CV+.
    CvPlus { folds: usize },
}

#[derive(Debug)]
enum Fitted {
    Raw { model: Box<dyn QuantileModel> },
    Split { model: Box<dyn QuantileModel>, scores: Vec<Arc<Vec<f64>>> },
    CvPlus { models: Vec<Box<dyn QuantileModel>>, fold_of: Vec<usize>, scores: Vec<Vec<f64>> },
}

/// Fitted surrogate(s) plus per-pair nonconformity scores.
#[derive(Debug)]
pub struct Conformalizer {
    levels: QuantileLevels,
    pairs: Vec<QuantilePair>,
    fitted: Fitted,
}

/// Number of leading rows used for training in a chronological split.
pub fn split_point(n: usize) -> usize {
    (2 * n) / 3
}

impl Conformalizer {
    /// Fits the surrogate on `(x, y)` (rows in chronological order) and
    /// computes scores according to `method`.
    pub fn fit(
        method: Method,
        spec: &SurrogateSpec,
        x: &FeatureSet,
        y: &[f64],
        levels: &QuantileLevels,
        seed: u64,
    ) -> Result<Self, ConformalError> {
        let pairs = levels.pairs();
        let n = y.len();
        let fitted = match method {
            Method::Raw => Fitted::Raw { model: fit_surrogate(spec, x, y, levels, seed)? },
            Method::Split => {
                let cut = split_point(n);
                if cut == 0 || cut == n {
                    return Err(ConformalError::EmptyCalibration);
                }
                let train: Vec<usize> = (0..cut).collect();
                let cal: Vec<usize> = (cut..n).collect();
                let model = fit_surrogate(spec, &x.subset(&train), &y[..cut], levels, seed)?;
                let pred = predict_quantiles(model.as_ref(), &x.subset(&cal))?;
                let scores = pairs
                    .iter()
                    .map(|p| {
                        let mut s: Vec<f64> = pred
                            .values
                            .iter()
                            .zip(&y[cut..])
                            .map(|(q, &t)| nonconformity(q[p.lower], q[p.upper], t))
                            .collect();
                        s.sort_by(f64::total_cmp);
                        Arc::new(s)
                    })
                    .collect();
                Fitted::Split { model, scores }
            }
            Method::CvPlus { folds } => {
                if folds < 2 || n < folds {
                    return Err(ConformalError::Folds { folds, rows: n });
                }
                let fold_of: Vec<usize> = (0..n).map(|i| i % folds).collect();
                let mut models = Vec::with_capacity(folds);
                let mut scores = vec![vec![0.0; n]; pairs.len()];
                for k in 0..folds {
                    let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != k).collect();
                    let held: Vec<usize> = (0..n).filter(|&i| fold_of[i] == k).collect();
                    let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                    let fold_seed = crate::rng::splitmix64(seed ^ (k as u64 + 1));
                    let model = fit_surrogate(spec, &x.subset(&train), &ty, levels, fold_seed)?;
                    let pred = predict_quantiles(model.as_ref(), &x.subset(&held))?;
                    for (q, &i) in pred.values.iter().zip(&held) {
                        for (pi, p) in pairs.iter().enumerate() {
                            scores[pi][i] = nonconformity(q[p.lower], q[p.upper], y[i]);
                        }
                    }
                    models.push(model);
                }
                Fitted::CvPlus { models, fold_of, scores }
            }
        };
        Ok(Self { levels: levels.clone(), pairs, fitted })
    }

    pub fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    pub fn pairs(&self) -> &[QuantilePair] {
        &self.pairs
    }

    pub fn method(&self) -> Method {
        match &self.fitted {
            Fitted::Raw { .. } => Method::Raw,
            Fitted::Split { .. } => Method::Split,
            Fitted::CvPlus { models, .. } => Method::CvPlus { folds: models.len() },
        }
    }

    /// Scores per pair (sorted for split, row order for CV+); empty for raw.
    pub fn scores(&self) -> Vec<Vec<f64>> {
        match &self.fitted {
            Fitted::Raw { .. } => Vec::new(),
            Fitted::Split { scores, .. } => scores.iter().map(|s| s.to_vec()).collect(),
            Fitted::CvPlus { scores, .. } => scores.clone(),
        }
    }

    /// Fold index of every training row (CV+ only).
    pub fn fold_assignment(&self) -> Option<&[usize]> {
        match &self.fitted {
            Fitted::CvPlus { fold_of, .. } => Some(fold_of),
            _ => None,
        }
    }

    /// Everything needed to produce calibrated intervals for `candidates`.
    pub fn candidates(&self, candidates: &FeatureSet) -> Result<Vec<CandidateIntervals>, ConformalError> {
        match &self.fitted {
            Fitted::Raw { model } | Fitted::Split { model, .. } => {
                let pred = predict_quantiles(model.as_ref(), candidates)?;
                let mean = predict_expectation(model.as_ref(), candidates)?;
                Ok(pred
                    .values
                    .into_iter()
                    .zip(mean)
                    .map(|(raw, expectation)| {
                        let arms = self
                            .pairs
                            .iter()
                            .enumerate()
                            .map(|(pi, p)| match &self.fitted {
                                Fitted::Split { scores, .. } => {
                                    Arms::Split { lo: raw[p.lower], hi: raw[p.upper], scores: Arc::clone(&scores[pi]) }
                                }
                                _ => Arms::Raw { lo: raw[p.lower], hi: raw[p.upper] },
                            })
                            .collect();
                        CandidateIntervals { raw, expectation, pairs: self.pairs.clone(), arms }
                    })
                    .collect())
            }
            Fitted::CvPlus { models, fold_of, scores } => {
                let preds = models
                    .iter()
                    .map(|m| predict_quantiles(m.as_ref(), candidates))
                    .collect::<Result<Vec<_>, _>>()?;
                let means = models
                    .iter()
                    .map(|m| predict_expectation(m.as_ref(), candidates))
                    .collect::<Result<Vec<_>, _>>()?;
                let k = models.len() as f64;
                let m = self.levels.len();
                Ok((0..candidates.len())
                    .map(|c| {
                        let mut raw = vec![0.0; m];
                        for p in &preds {
                            for (r, v) in raw.iter_mut().zip(&p.values[c]) {
                                *r += v / k;
                            }
                        }
                        let expectation = means.iter().map(|v| v[c]).sum::<f64>() / k;
                        let arms = self
                            .pairs
                            .iter()
                            .enumerate()
                            .map(|(pi, p)| {
                                let mut lower: Vec<f64> = fold_of
                                    .iter()
                                    .zip(&scores[pi])
                                    .map(|(&f, &d)| preds[f].values[c][p.lower] - d)
                                    .collect();
                                let mut upper: Vec<f64> = fold_of
                                    .iter()
                                    .zip(&scores[pi])
                                    .map(|(&f, &d)| preds[f].values[c][p.upper] + d)
                                    .collect();
                                lower.sort_by(f64::total_cmp);
                                upper.sort_by(f64::total_cmp);
                                Arms::CvPlus { lower, upper }
                            })
                            .collect();
                        CandidateIntervals { raw, expectation, pairs: self.pairs.clone(), arms }
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Arms {
    Raw { lo: f64, hi: f64 },
    Split { lo: f64, hi: f64, scores: Arc<Vec<f64>> },
    CvPlus { lower: Vec<f64>, upper: Vec<f64> },
}

/// Calibration data of one candidate for every symmetric pair.
#[derive(Debug, Clone)]
pub struct CandidateIntervals {
    /// Sorted raw quantiles (fold average under CV+).
    pub raw: Vec<f64>,
    /// Expectation proxy of the underlying surrogate(s).
    pub expectation: f64,
    pairs: Vec<QuantilePair>,
    arms: Vec<Arms>,
}

impl CandidateIntervals {
    pub fn pairs(&self) -> &[QuantilePair] {
        &self.pairs
    }

    /// Interval of pair `pair` at miscoverage `alpha` (clamped). Raw arms
    /// ignore `alpha`.
    pub fn interval(&self, pair: usize, alpha: f64) -> CalibratedInterval {
        let nominal = self.pairs[pair].alpha;
        match &self.arms[pair] {
            Arms::Raw { lo, hi } => finish(*lo, *hi, nominal, nominal),
            Arms::Split { lo, hi, scores } => scp_interval(*lo, *hi, scores, nominal, alpha),
            Arms::CvPlus { lower, upper } => cvplus_interval(lower, upper, nominal, alpha),
        }
    }

    pub fn is_raw(&self) -> bool {
        self.arms.iter().all(|a| matches!(a, Arms::Raw { .. }))
    }

    /// The conformalized quantile grid: every pair replaced by its interval
    /// at the pair's miscoverage, then sorted.
    pub fn grid(&self, alphas: &[f64]) -> Vec<f64> {
        if self.is_raw() {
            return self.raw.clone();
        }
        let mut g = self.raw.clone();
        for (pi, p) in self.pairs.iter().enumerate() {
            let iv = self.interval(pi, alphas[pi]);
            g[p.lower] = iv.lo;
            g[p.upper] = iv.hi;
        }
        g.sort_by(f64::total_cmp);
        g
    }
}

/// Shifts each lower quantile down and each upper quantile up by its pair's
/// adjustment, then sorts.
pub fn conformalize_grid(raw: &[f64], pairs: &[QuantilePair], adjustments: &[f64]) -> Vec<f64> {
    let mut g = raw.to_vec();
    for (p, &a) in pairs.iter().zip(adjustments) {
        g[p.lower] -= a;
        g[p.upper] += a;
    }
    g.sort_by(f64::total_cmp);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn score_examples() {
        assert_eq!(nonconformity(0.0, 2.0, 1.0), -1.0);
        assert_eq!(nonconformity(0.0, 2.0, 4.0), 2.0);
        assert_eq!(nonconformity(0.0, 2.0, 0.0), 0.0);
        assert_eq!(scp_scores(&[], &[], &[]), Err(ConformalError::EmptyCalibration));
    }

    #[test]
    fn split_interval_examples() {
        let zero = [0.0; 5];
        let iv = scp_interval(1.0, 2.0, &zero, 0.2, 0.2);
        assert_eq!((iv.lo, iv.hi), (1.0, 2.0));
        let c = [0.5; 5];
        let iv = scp_interval(1.0, 2.0, &c, 0.2, 0.2);
        assert_eq!((iv.lo, iv.hi), (0.5, 2.5));
        assert_eq!(conformal_quantile(&[-1.0, 0.0, 1.0, 2.0], 0.5), 1.0);
    }

    #[test]
    fn rank_is_clamped() {
        assert_eq!(conservative_rank(4, 0.01), 4);
        assert_eq!(conservative_rank(4, 0.99), 1);
        assert_eq!(conservative_rank(9, 0.1), 9);
        assert_eq!(conservative_rank(19, 0.1), 18);
    }

    #[test]
    fn crossed_interval_collapses() {
        let iv = scp_interval(1.0, 2.0, &[-3.0], 0.5, 0.5);
        assert_eq!((iv.lo, iv.hi), (1.5, 1.5));
    }

    #[test]
    fn grid_examples() {
        let pairs = QuantileLevels::uniform(4).unwrap().pairs();
        let raw = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(conformalize_grid(&raw, &pairs, &[0.0, 0.0]), raw.to_vec());
        assert_eq!(conformalize_grid(&raw, &pairs, &[2.0, 0.0]), vec![-1.0, 2.0, 3.0, 6.0]);
    }

    /// Brute force over the definition: the upper end is the smallest value
    /// `t` with at least `ceil((1-a)(n+1))` adjusted upper values `<= t`.
    #[test]
    fn cvplus_matches_enumeration() {
        let lower = [0.3, -1.0, 0.1, 0.7];
        let upper = [2.0, 1.5, 3.1, 2.2];
        let mut ls = lower.to_vec();
        ls.sort_by(f64::total_cmp);
        let mut us = upper.to_vec();
        us.sort_by(f64::total_cmp);
        for &a in &[0.2, 0.4, 0.6] {
            let iv = cvplus_interval(&ls, &us, a, a);
            let need = ((1.0 - a) * 5.0f64).ceil() as usize;
            let hi = upper
                .iter()
                .copied()
                .filter(|&t| upper.iter().filter(|&&u| u <= t).count() >= need)
                .fold(f64::INFINITY, f64::min);
            let lo = lower
                .iter()
                .copied()
                .filter(|&t| lower.iter().filter(|&&l| l >= t).count() >= need)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((iv.lo, iv.hi), (lo, hi), "alpha {a}");
        }
    }

    proptest! {
        #[test]
        fn adjusted_grid_sorted(raw in prop::collection::vec(-5.0f64..5.0, 6), adj in prop::collection::vec(-3.0f64..3.0, 3)) {
            let mut raw = raw;
            raw.sort_by(f64::total_cmp);
            let pairs = QuantileLevels::uniform(6).unwrap().pairs();
            let g = conformalize_grid(&raw, &pairs, &adj);
            prop_assert!(g.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn adjustment_monotone_in_confidence(scores in prop::collection::vec(-2.0f64..2.0, 1..40), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let mut s = scores;
            s.sort_by(f64::total_cmp);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(conformal_quantile(&s, lo) >= conformal_quantile(&s, hi));
        }
    }
}
