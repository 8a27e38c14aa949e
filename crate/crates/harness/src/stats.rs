//! Rank and hypothesis-testing utilities.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("{rows} rows are too few for {predictors} predictors")]
    TooFewRows { rows: usize, predictors: usize },
    #[error("non-finite input")]
    NonFinite,
}

/// Ranks ascending from 1; tied values share the average of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Largest sample size evaluated by exact enumeration.
pub const WILCOXON_EXACT_MAX: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wilcoxon {
    /// Pairs left after dropping zero differences.
    pub n: usize,
    /// Sum of the ranks of positive differences.
    pub w_plus: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test of `x - y`.
///
/// Zero differences are dropped and tied magnitudes get average ranks. Up to
/// [`WILCOXON_EXACT_MAX`] pairs the null distribution is enumerated exactly
/// (over half-integer rank sums, so ties are handled); above that the normal
/// approximation with tie and continuity corrections is used.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<Wilcoxon, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = d.len();
    if n == 0 {
        return Ok(Wilcoxon { n, w_plus: 0.0, p_value: 1.0, exact: true });
    }
    let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    if n <= WILCOXON_EXACT_MAX {
        return Ok(Wilcoxon { n, w_plus, p_value: exact_p(&ranks, w_plus), exact: true });
    }
    Ok(Wilcoxon { n, w_plus, p_value: normal_p(&ranks, w_plus), exact: false })
}

fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    // Doubled ranks are integers even with ties.
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(ranks.len() as i32);
    let w2 = (2.0 * w_plus).round() as usize;
    let le: f64 = counts[..=w2].iter().sum::<f64>() / all;
    let ge: f64 = counts[w2..].iter().sum::<f64>() / all;
    (2.0 * le.min(ge)).min(1.0)
}

fn normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adjusted {
    pub adjusted: Vec<f64>,
    pub rejected: Vec<bool>,
}

/// Benjamini-Hochberg step-up procedure at false discovery rate `q`.
pub fn benjamini_hochberg(p: &[f64], q: f64) -> Adjusted {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![1.0; m];
    let mut running = 1.0f64;
    for (pos, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (pos + 1) as f64);
        adjusted[i] = running.min(1.0);
    }
    let cutoff = order
        .iter()
        .enumerate()
        .filter(|(pos, &i)| p[i] <= (pos + 1) as f64 * q / m as f64)
        .map(|(pos, _)| pos + 1)
        .max()
        .unwrap_or(0);
    let mut rejected = vec![false; m];
    for &i in &order[..cutoff] {
        rejected[i] = true;
    }
    Adjusted { adjusted, rejected }
}

pub fn bonferroni(p: &[f64], q: f64) -> Adjusted {
    let m = p.len() as f64;
    let adjusted: Vec<f64> = p.iter().map(|v| (v * m).min(1.0)).collect();
    let rejected = p.iter().map(|v| v * m <= q).collect();
    Adjusted { adjusted, rejected }
}

/// Adjusted R² of an ordinary least-squares fit of `y` on `rows` plus an
/// intercept. A rank-deficient design falls back to the pseudo-inverse and
/// counts only its rank as predictors.
pub fn ols_adjusted_r2(rows: &[Vec<f64>], y: &[f64]) -> Result<f64, StatsError> {
    let n = y.len();
    if rows.len() != n {
        return Err(StatsError::LengthMismatch(rows.len(), n));
    }
    if y.iter().chain(rows.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let p = rows.first().map_or(0, Vec::len);
    let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let (beta, rank) = match xtx.clone().cholesky() {
        Some(chol) if well_conditioned(&chol) => (chol.solve(&(x.transpose() * &yv)), p + 1),
        _ => {
            let svd = x.clone().svd(true, true);
            let tol = svd.singular_values.max() * (n.max(p + 1) as f64) * f64::EPSILON;
            let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
            let beta = svd.solve(&yv, tol).map_err(|_| StatsError::NonFinite)?;
            (beta, rank)
        }
    };
    let predictors = rank.saturating_sub(1);
    if n <= predictors + 1 {
        return Err(StatsError::TooFewRows { rows: n, predictors });
    }
    let fitted = &x * beta;
    let mean = yv.mean();
    let sse: f64 = yv.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let sst: f64 = yv.iter().map(|a| (a - mean).powi(2)).sum();
    if sst <= 0.0 {
        return Ok(0.0);
    }
    let r2 = 1.0 - sse / sst;
    Ok(1.0 - (1.0 - r2) * (n - 1) as f64 / (n - predictors - 1) as f64)
}

fn well_conditioned(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let min = diag.iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
    min > max * 1e-7
}

/// Percentile of `values` with linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 1.0, 5.0]), vec![3.0, 3.0, 1.0, 3.0]);
        assert_eq!(average_ranks(&[2.0, 2.0]), vec![1.5, 1.5]);
    }

    #[test]
    fn wilcoxon_exact_dominance() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [0.0; 6];
        let w = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!(w.exact);
        assert_eq!(w.w_plus, 21.0);
        assert!((w.p_value - 0.03125).abs() < 1e-15);
        assert_eq!(wilcoxon_signed_rank(&x, &x).unwrap().p_value, 1.0);
    }

    /// Brute force over every sign pattern.
    fn enumerate_p(ranks: &[f64], w: f64) -> f64 {
        let n = ranks.len();
        let mean = ranks.iter().sum::<f64>() / 2.0;
        let dev = (w - mean).abs();
        let hits = (0u32..1 << n)
            .filter(|mask| {
                let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
                (s - mean).abs() >= dev - 1e-9
            })
            .count();
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn exact_p_matches_brute_force_with_ties() {
        let x = [1.5, -2.0, 2.0, 0.3, 4.0, -0.3, 2.0, 5.5, -1.0];
        let y = [0.0; 9];
        let w = wilcoxon_signed_rank(&x, &y).unwrap();
        let ranks = average_ranks(&x.iter().map(|v: &f64| v.abs()).collect::<Vec<_>>());
        // The null distribution is symmetric, so the two-sided p is the
        // probability of a deviation at least as large.
        assert!((w.p_value - enumerate_p(&ranks, w.w_plus)).abs() < 1e-12);
    }

    #[test]
    fn normal_approximation_tracks_exact_distribution() {
        let ranks: Vec<f64> = (1..=25).map(f64::from).collect();
        for w in [80.0, 100.0, 120.0, 162.5, 200.0, 240.0] {
            let (e, a) = (exact_p(&ranks, w), normal_p(&ranks, w));
            assert!((e - a).abs() < 0.01, "w {w}: exact {e} normal {a}");
        }
        let x: Vec<f64> = (1..=30).map(f64::from).collect();
        let w = wilcoxon_signed_rank(&x, &vec![0.0; 30]).unwrap();
        assert!(!w.exact && w.p_value < 1e-5);
    }

    #[test]
    fn bh_example_rejects_all() {
        let a = benjamini_hochberg(&[0.01, 0.04, 0.03], 0.05);
        assert_eq!(a.rejected, vec![true, true, true]);
        assert!((a.adjusted[1] - 0.04).abs() < 1e-15);
        let b = bonferroni(&[0.01, 0.04, 0.03], 0.05);
        assert_eq!(b.rejected, vec![true, false, false]);
    }

    #[test]
    fn r2_of_exact_line_and_collinear_design() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 1.0 + 2.0 * i as f64).collect();
        assert!((ols_adjusted_r2(&rows, &y).unwrap() - 1.0).abs() < 1e-12);
        // Duplicated column: rank 2, same fit.
        let dup: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[0]]).collect();
        assert!((ols_adjusted_r2(&dup, &y).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 0.5), 2.5);
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 0.0), 1.0);
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 1.0), 4.0);
    }
}
