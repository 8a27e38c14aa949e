//! Gaussian-process quantile surrogate.
//!
//! ARD squared-exponential kernel plus white noise on standardized targets.
//! Hyperparameters maximize the log marginal likelihood; each log-parameter
//! is mapped through a sigmoid onto its bounds so the search is
//! unconstrained. Quantiles are the Gaussian predictive quantiles
//! `mu + z(tau) * sigma`, with the noise variance included in `sigma`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::optim::{lbfgs, LbfgsOptions};
use super::{QuantileLevels, QuantileModel, SurrogateError};
use crate::space::{Encoding, FeatureDims, FeatureSet};

const LOG_LENGTH: (f64, f64) = (-4.605_170_185_988_091, 4.605_170_185_988_091); // ln 0.01, ln 100
const LOG_SIGNAL: (f64, f64) = (-4.605_170_185_988_091, 4.605_170_185_988_091);
const LOG_NOISE: (f64, f64) = (-20.723_265_836_946_41, 0.0); // ln 1e-9, ln 1
const JITTERS: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpParams {
    /// Random restarts on top of the default starting point.
    pub restarts: usize,
    pub max_iter: usize,
    /// Hyperparameters are optimized on a random subset of at most this many
    /// rows; the posterior always uses every row.
    pub max_opt_rows: usize,
    /// Fixes the noise variance (in standardized units) instead of learning it.
    pub fixed_noise: Option<f64>,
}

impl Default for GpParams {
    fn default() -> Self {
        Self { restarts: 3, max_iter: 100, max_opt_rows: 300, fixed_noise: None }
    }
}

impl GpParams {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.max_iter == 0 || self.max_opt_rows < 2 {
            return Err(SurrogateError::InvalidSpec("gp iteration and row limits must be positive".into()));
        }
        if let Some(v) = self.fixed_noise {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SurrogateError::InvalidSpec(format!("fixed noise must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Kernel hyperparameters on their natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub lengths: Vec<f64>,
    pub signal: f64,
    pub noise: f64,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn from_unit(u: f64, (lo, hi): (f64, f64)) -> (f64, f64) {
    let s = sigmoid(u);
    (lo + (hi - lo) * s, (hi - lo) * s * (1.0 - s))
}

fn to_unit(v: f64, (lo, hi): (f64, f64)) -> f64 {
    let p = ((v - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

fn kernel(a: &[f64], b: &[f64], h: &Hyper) -> f64 {
    let d2: f64 = a.iter().zip(b).zip(&h.lengths).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    h.signal * (-0.5 * d2).exp()
}

fn gram(x: &[Vec<f64>], h: &Hyper) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = h.signal + h.noise;
        for j in 0..i {
            let v = kernel(&x[i], &x[j], h);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn cholesky_with_jitter(mut k: DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let mut applied = 0.0;
    for &j in &JITTERS {
        let extra = j - applied;
        for i in 0..k.nrows() {
            k[(i, i)] += extra;
        }
        applied = j;
        if let Some(c) = Cholesky::new(k.clone()) {
            return Some((c, j));
        }
    }
    None
}

struct Objective<'a> {
    x: &'a [Vec<f64>],
    y: DVector<f64>,
    fixed_noise: Option<f64>,
}

impl Objective<'_> {
    fn dim(&self) -> usize {
        self.x[0].len() + 1 + usize::from(self.fixed_noise.is_none())
    }

    fn decode(&self, u: &[f64]) -> (Hyper, Vec<f64>) {
        let d = self.x[0].len();
        let mut dtheta = Vec::with_capacity(u.len());
        let mut lengths = Vec::with_capacity(d);
        for &ui in &u[..d] {
            let (t, dt) = from_unit(ui, LOG_LENGTH);
            lengths.push(t.exp());
            dtheta.push(dt);
        }
        let (ts, dts) = from_unit(u[d], LOG_SIGNAL);
        dtheta.push(dts);
        let noise = match self.fixed_noise {
            Some(v) => v,
            None => {
                let (tn, dtn) = from_unit(u[d + 1], LOG_NOISE);
                dtheta.push(dtn);
                tn.exp()
            }
        };
        (Hyper { lengths, signal: ts.exp(), noise }, dtheta)
    }

    fn encode(&self, h: &Hyper) -> Vec<f64> {
        let mut u: Vec<f64> = h.lengths.iter().map(|l| to_unit(l.ln(), LOG_LENGTH)).collect();
        u.push(to_unit(h.signal.ln(), LOG_SIGNAL));
        if self.fixed_noise.is_none() {
            u.push(to_unit(h.noise.ln(), LOG_NOISE));
        }
        u
    }

    /// Negative log marginal likelihood and its gradient in `u`.
    fn eval(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let (h, dtheta) = self.decode(u);
        let n = self.x.len();
        let d = h.lengths.len();
        let k = gram(self.x, &h);
        let Some((chol, _)) = cholesky_with_jitter(k.clone()) else {
            return (f64::INFINITY, vec![0.0; u.len()]);
        };
        let alpha = chol.solve(&self.y);
        let logdet: f64 = chol.l_dirty().diagonal().iter().take(n).map(|v| v.ln()).sum();
        let nll = 0.5 * self.y.dot(&alpha) + logdet + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

        // W = alpha alpha^T - K^-1; dNLL/dtheta = -0.5 tr(W dK/dtheta).
        let kinv = chol.inverse();
        let mut grad = vec![0.0; u.len()];
        let mut g_signal = 0.0;
        let mut g_noise = 0.0;
        for i in 0..n {
            for j in 0..n {
                let w = alpha[i] * alpha[j] - kinv[(i, j)];
                let kf = if i == j { h.signal } else { k[(i, j)] };
                g_signal += w * kf;
                if i == j {
                    g_noise += w * h.noise;
                }
                if j < i {
                    for (l, len) in h.lengths.iter().enumerate() {
                        let diff = (self.x[i][l] - self.x[j][l]) / len;
                        // Factor two for the symmetric (j, i) entry.
                        grad[l] += 2.0 * w * kf * diff * diff;
                    }
                }
            }
        }
        for g in grad.iter_mut().take(d) {
            *g *= -0.5;
        }
        grad[d] = -0.5 * g_signal;
        if self.fixed_noise.is_none() {
            grad[d + 1] = -0.5 * g_noise;
        }
        for (g, dt) in grad.iter_mut().zip(&dtheta) {
            *g *= dt;
        }
        (nll, grad)
    }
}

#[derive(Debug, Clone)]
pub struct QuantileGp {
    levels: QuantileLevels,
    dims: FeatureDims,
    x: Vec<Vec<f64>>,
    hyper: Hyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    z: Vec<f64>,
}

pub fn fit_qgp(x: &FeatureSet, y: &[f64], levels: &QuantileLevels, params: &GpParams, seed: u64) -> Result<QuantileGp, SurrogateError> {
    params.validate()?;
    if y.len() < 2 {
        return Err(SurrogateError::EmptyData);
    }
    let rows = x.view(Encoding::OneHot);
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = if sd > 1e-12 { sd } else { 1.0 };
    let yz: Vec<f64> = y.iter().map(|v| (v - mean) / scale).collect();
    let d = rows[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let hyper = if d == 0 {
        Hyper { lengths: Vec::new(), signal: 1.0, noise: params.fixed_noise.unwrap_or(1.0) }
    } else {
        let (opt_x, opt_y): (Vec<Vec<f64>>, Vec<f64>) = if n > params.max_opt_rows {
            let idx = sample(&mut rng, n, params.max_opt_rows);
            idx.iter().map(|i| (rows[i].clone(), yz[i])).unzip()
        } else {
            (rows.to_vec(), yz.clone())
        };
        let obj = Objective { x: &opt_x, y: DVector::from_vec(opt_y), fixed_noise: params.fixed_noise };
        let default_start = Hyper { lengths: vec![0.5; d], signal: 1.0, noise: params.fixed_noise.unwrap_or(0.01) };
        let mut starts = vec![obj.encode(&default_start)];
        for _ in 0..params.restarts {
            starts.push((0..obj.dim()).map(|_| to_unit_random(&mut rng)).collect());
        }
        let opts = LbfgsOptions { max_iter: params.max_iter, ..LbfgsOptions::default() };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for s in starts {
            let m = lbfgs(|u| obj.eval(u), s, &opts);
            if m.value.is_finite() && best.as_ref().is_none_or(|(v, _)| m.value < *v) {
                best = Some((m.value, m.x));
            }
        }
        let Some((_, u)) = best else {
            return Err(SurrogateError::NotPositiveDefinite);
        };
        obj.decode(&u).0
    };

    let k = gram(rows, &hyper);
    let (chol, jitter) = cholesky_with_jitter(k).ok_or(SurrogateError::NotPositiveDefinite)?;
    if jitter > 0.0 {
        log::debug!("gp posterior needed jitter {jitter}");
    }
    let alpha = chol.solve(&DVector::from_vec(yz));
    let normal = Normal::standard();
    let z = levels.taus().iter().map(|&t| normal.inverse_cdf(t)).collect();
    Ok(QuantileGp {
        levels: levels.clone(),
        dims: x.dims(),
        x: rows.to_vec(),
        hyper,
        chol,
        alpha,
        y_mean: mean,
        y_scale: scale,
        z,
    })
}

fn to_unit_random<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let p: f64 = rng.random_range(0.05..0.95);
    (p / (1.0 - p)).ln()
}

impl QuantileGp {
    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    /// Predictive mean and standard deviation (noise included) on the
    /// original target scale.
    pub fn predict_moments(&self, rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
        let n = self.x.len();
        rows.iter()
            .map(|r| {
                let ks = DVector::from_iterator(n, self.x.iter().map(|xi| kernel(xi, r, &self.hyper)));
                let mu = ks.dot(&self.alpha);
                let v = self.chol.l().solve_lower_triangular(&ks).expect("cholesky factor is nonsingular");
                let var = (self.hyper.signal - v.dot(&v)).max(0.0) + self.hyper.noise;
                (self.y_mean + self.y_scale * mu, self.y_scale * var.sqrt())
            })
            .collect()
    }
}

impl QuantileModel for QuantileGp {
    fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    fn dims(&self) -> FeatureDims {
        self.dims
    }

    fn predict_raw(&self, x: &FeatureSet) -> Vec<Vec<f64>> {
        self.predict_moments(x.view(Encoding::OneHot))
            .into_iter()
            .map(|(mu, sd)| self.z.iter().map(|z| mu + z * sd).collect())
            .collect()
    }

    fn predict_mean(&self, x: &FeatureSet) -> Vec<f64> {
        x.view(Encoding::OneHot)
            .iter()
            .map(|r| {
                let mu: f64 = self.x.iter().zip(self.alpha.iter()).map(|(xi, a)| kernel(xi, r, &self.hyper) * a).sum();
                self.y_mean + self.y_scale * mu
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize, seed: u64) -> (FeatureSet, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
        let y = rows.iter().map(|r| (5.0 * r[0]).sin() + 0.5 * r[1] + 0.05 * rng.random::<f64>()).collect();
        (FeatureSet::numeric(rows), y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = data(15, 1);
        let rows = x.view(Encoding::OneHot);
        let obj = Objective { x: rows, y: DVector::from_vec(y), fixed_noise: None };
        let u = vec![0.3, -0.4, 0.2, 1.5];
        let (_, g) = obj.eval(&u);
        for i in 0..u.len() {
            let h = 1e-6;
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let fd = (obj.eval(&up).0 - obj.eval(&dn).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * fd.abs().max(1.0), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn median_is_posterior_mean_and_levels_symmetric() {
        let (x, y) = data(20, 2);
        let levels = QuantileLevels::new(vec![0.1, 0.5 - 1e-9, 0.5 + 1e-9, 0.9]).unwrap();
        let m = fit_qgp(&x, &y, &levels, &GpParams::default(), 0).unwrap();
        let (q, _) = data(5, 3);
        let raw = m.predict_raw(&q);
        let mean = m.predict_mean(&q);
        for (r, mu) in raw.iter().zip(&mean) {
            assert!(((mu - r[0]) - (r[3] - mu)).abs() < 1e-9);
            assert!((r[1] - mu).abs() < 1e-6);
            assert!(r.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn noise_free_interpolation() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (3.0 * r[0]).cos()).collect();
        let x = FeatureSet::numeric(rows.clone());
        let levels = QuantileLevels::uniform(4).unwrap();
        let params = GpParams { fixed_noise: Some(0.0), ..GpParams::default() };
        let m = fit_qgp(&x, &y, &levels, &params, 0).unwrap();
        let raw = m.predict_raw(&x);
        for (q, t) in raw.iter().zip(&y) {
            for v in q {
                assert!((v - t).abs() < 1e-4, "{v} vs {t}");
            }
        }
    }
}
