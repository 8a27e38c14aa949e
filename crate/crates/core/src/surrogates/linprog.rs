//! Exact L1-penalized pinball regression as a linear program.
//!
//! The problem
//!
//! ```text
//! min_{b, w}  (1/n) sum_i L_tau(y_i - b - x_i w) + lambda * |w|_1
//! ```
//!
//! is written in standard form with split residuals `u+ - u-` and split
//! coefficients, then solved with a dense-tableau primal simplex. The
//! residual slacks give a feasible starting basis, so no phase one is needed.
//! Dantzig pricing is used until the method stalls on degenerate pivots, at
//! which point Bland's rule takes over and guarantees termination.

use super::SurrogateError;

const PIVOT_EPS: f64 = 1e-11;
const STALL_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LpFit {
    pub intercept: f64,
    pub weights: Vec<f64>,
    /// Mean pinball loss plus the L1 penalty at the solution.
    pub objective: f64,
}

/// Solves the penalized pinball regression of `y` on the rows of `x`.
///
/// With `nonneg` set, the slopes are constrained to be nonnegative; the
/// intercept is always free and unpenalized.
pub fn pinball_regression(
    x: &[Vec<f64>],
    y: &[f64],
    tau: f64,
    lambda: f64,
    nonneg: bool,
) -> Result<LpFit, SurrogateError> {
    let n = y.len();
    if n == 0 {
        return Err(SurrogateError::EmptyData);
    }
    if x.len() != n {
        return Err(SurrogateError::LengthMismatch { rows: x.len(), targets: n });
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SurrogateError::InvalidLevel(tau));
    }
    if !(lambda >= 0.0) {
        return Err(SurrogateError::InvalidSpec(format!("lambda must be >= 0, got {lambda}")));
    }
    let p = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != p) {
        return Err(SurrogateError::InvalidSpec("ragged feature matrix".into()));
    }

    // Column layout: b+, b-, w+ (p), w- (p unless nonneg), u+ (n), u- (n).
    let w_neg = if nonneg { 0 } else { p };
    let up0 = 2 + p + w_neg;
    let um0 = up0 + n;
    let cols = um0 + n;
    let penalty = lambda * n as f64;

    let mut cost = vec![0.0; cols];
    cost[2..2 + p + w_neg].fill(penalty);
    cost[up0..um0].fill(tau);
    cost[um0..cols].fill(1.0 - tau);

    let width = cols + 1;
    let mut tab = vec![0.0; (n + 1) * width];
    let mut basis = vec![0usize; n];
    for i in 0..n {
        let sign = if y[i] >= 0.0 { 1.0 } else { -1.0 };
        let row = &mut tab[i * width..(i + 1) * width];
        row[0] = sign;
        row[1] = -sign;
        for j in 0..p {
            row[2 + j] = sign * x[i][j];
            if !nonneg {
                row[2 + p + j] = -sign * x[i][j];
            }
        }
        row[up0 + i] = sign;
        row[um0 + i] = -sign;
        row[cols] = sign * y[i];
        basis[i] = if sign > 0.0 { up0 + i } else { um0 + i };
    }
    // Reduced-cost row: c_j - c_B B^-1 A_j, with the negated objective in
    // the last column.
    {
        let (body, obj) = tab.split_at_mut(n * width);
        obj[..cols].copy_from_slice(&cost);
        for i in 0..n {
            let cb = cost[basis[i]];
            if cb != 0.0 {
                let row = &body[i * width..(i + 1) * width];
                for (o, r) in obj.iter_mut().zip(row) {
                    *o -= cb * r;
                }
            }
        }
    }

    let scale = cost.iter().fold(1.0f64, |a, &c| a.max(c.abs()));
    let rc_eps = 1e-10 * scale;
    let max_iter = 50 * (n + cols) + 1000;
    let mut bland = false;
    let mut stall = 0usize;
    let mut last_obj = f64::INFINITY;
    let mut converged = false;

    for _ in 0..max_iter {
        let obj_row = &tab[n * width..(n + 1) * width];
        let entering = if bland {
            (0..cols).find(|&j| obj_row[j] < -rc_eps)
        } else {
            let mut best = None;
            let mut best_val = -rc_eps;
            for (j, &v) in obj_row[..cols].iter().enumerate() {
                if v < best_val {
                    best_val = v;
                    best = Some(j);
                }
            }
            best
        };
        let Some(e) = entering else {
            converged = true;
            break;
        };

        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..n {
            let a = tab[i * width + e];
            if a > PIVOT_EPS {
                let ratio = tab[i * width + cols] / a;
                let better = match leave {
                    None => true,
                    Some(l) => ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && basis[i] < basis[l]),
                };
                if better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(r) = leave else {
            return Err(SurrogateError::Solver("objective unbounded below".into()));
        };
        pivot(&mut tab, width, n + 1, r, e);
        basis[r] = e;

        let obj = -tab[n * width + cols];
        if obj < last_obj - 1e-12 * scale {
            last_obj = obj;
            stall = 0;
        } else {
            stall += 1;
            if stall > STALL_LIMIT {
                bland = true;
            }
        }
    }
    if !converged {
        return Err(SurrogateError::Solver("iteration limit reached".into()));
    }

    let mut sol = vec![0.0; cols];
    for i in 0..n {
        sol[basis[i]] = tab[i * width + cols].max(0.0);
    }
    let intercept = sol[0] - sol[1];
    let weights: Vec<f64> = (0..p)
        .map(|j| if nonneg { sol[2 + j] } else { sol[2 + j] - sol[2 + p + j] })
        .collect();
    let objective = objective_value(x, y, tau, lambda, intercept, &weights);
    Ok(LpFit { intercept, weights, objective })
}

fn pivot(tab: &mut [f64], width: usize, rows: usize, r: usize, e: usize) {
    let inv = 1.0 / tab[r * width + e];
    for v in &mut tab[r * width..(r + 1) * width] {
        *v *= inv;
    }
    tab[r * width + e] = 1.0;
    let pivot_row: Vec<f64> = tab[r * width..(r + 1) * width].to_vec();
    for i in 0..rows {
        if i == r {
            continue;
        }
        let f = tab[i * width + e];
        if f == 0.0 {
            continue;
        }
        let row = &mut tab[i * width..(i + 1) * width];
        for (v, pv) in row.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        row[e] = 0.0;
    }
}

/// Mean pinball loss plus `lambda * |w|_1` for a given linear model.
pub fn objective_value(x: &[Vec<f64>], y: &[f64], tau: f64, lambda: f64, intercept: f64, weights: &[f64]) -> f64 {
    let n = y.len() as f64;
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &t)| {
            let pred = intercept + row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
            super::pinball(t - pred, tau)
        })
        .sum();
    loss / n + lambda * weights.iter().map(|w| w.abs()).sum::<f64>()
}
