//! Online miscoverage control.
//!
//! [`AciState`] runs the fixed-step update `alpha += gamma * (target - err)`.
//! [`DtAciState`] runs several such experts with different steps and mixes
//! them with exponential weights driven by the pinball loss of the
//! realised feedback level. Clamping into a usable range happens where the
//! level is consumed, not here.

use rand::Rng;

use crate::config::AlphaMode;

/// Doubling grid of expert step sizes.
pub const DEFAULT_GAMMAS: [f64; 8] = [0.001, 0.002, 0.004, 0.008, 0.016, 0.032, 0.064, 0.128];
pub const DEFAULT_ACI_GAMMA: f64 = 0.01;
pub const DEFAULT_INTERVAL_LENGTH: usize = 50;

/// Search range of the feedback level.
pub const BETA_BOUNDS: (f64, f64) = (0.001, 0.999);
const BETA_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct AciState {
    pub alpha_target: f64,
    pub alpha_t: f64,
    pub gamma: f64,
}

impl AciState {
    pub fn new(alpha_target: f64, gamma: f64) -> Self {
        Self { alpha_target, alpha_t: alpha_target, gamma }
    }

    pub fn update(&mut self, breached: bool) {
        let err = if breached { 1.0 } else { 0.0 };
        self.alpha_t += self.gamma * (self.alpha_target - err);
    }
}

/// Learning rate and regularization of the expert weights for target level
/// `alpha`, interval length `l` and `k` experts.
pub fn dtaci_default_params(alpha: f64, l: usize, k: usize) -> (f64, f64) {
    let lf = l as f64;
    let eta = ((3.0 / lf) * (((lf * k as f64).ln() + 2.0) / ((1.0 - alpha).powi(2) * alpha.powi(2)))).sqrt();
    (eta, 1.0 / (2.0 * lf))
}

/// Pinball loss of feedback `beta` against expert level `theta` at target
/// level `alpha`.
pub fn expert_loss(beta: f64, theta: f64, alpha: f64) -> f64 {
    let u = beta - theta;
    if u > 0.0 {
        alpha * u
    } else {
        (alpha - 1.0) * u
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtAciState {
    pub gammas: Vec<f64>,
    pub weights: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_target: f64,
    pub eta: f64,
    pub sigma: f64,
    pub interval_length: usize,
    /// Level sampled after the most recent update.
    pub alpha_t: f64,
}

impl DtAciState {
    pub fn new(alpha_target: f64, gammas: &[f64], interval_length: usize) -> Self {
        let k = gammas.len().max(1);
        let (eta, sigma) = dtaci_default_params(alpha_target, interval_length, k);
        Self::with_params(alpha_target, gammas, interval_length, eta, sigma)
    }

    pub fn with_params(alpha_target: f64, gammas: &[f64], interval_length: usize, eta: f64, sigma: f64) -> Self {
        let k = gammas.len();
        Self {
            gammas: gammas.to_vec(),
            weights: vec![1.0 / k as f64; k],
            alphas: vec![alpha_target; k],
            alpha_target,
            eta,
            sigma,
            interval_length,
            alpha_t: alpha_target,
        }
    }

    /// One step given the feedback level `beta` and each expert's breach
    /// indicator against its own interval. Returns the next level.
    pub fn update<R: Rng + ?Sized>(&mut self, beta: f64, breaches: &[bool], rng: &mut R) -> f64 {
        let k = self.gammas.len();
        assert_eq!(breaches.len(), k, "one breach indicator per expert");
        if k == 1 {
            // A single expert is plain ACI; no mixing and no draw.
            let err = if breaches[0] { 1.0 } else { 0.0 };
            self.alphas[0] += self.gammas[0] * (self.alpha_target - err);
            self.alpha_t = self.alphas[0];
            return self.alpha_t;
        }
        let mut total = 0.0;
        for i in 0..k {
            self.weights[i] *= (-self.eta * expert_loss(beta, self.alphas[i], self.alpha_target)).exp();
            total += self.weights[i];
        }
        if !(total > 0.0) || !total.is_finite() {
            log::debug!("expert weights underflowed; resetting to uniform");
            self.weights.fill(1.0 / k as f64);
        } else {
            let floor = self.sigma * total / k as f64;
            let mut sum = 0.0;
            for w in &mut self.weights {
                *w = (1.0 - self.sigma) * *w + floor;
                sum += *w;
            }
            for w in &mut self.weights {
                *w /= sum;
            }
        }
        for i in 0..k {
            let err = if breaches[i] { 1.0 } else { 0.0 };
            self.alphas[i] += self.gammas[i] * (self.alpha_target - err);
        }
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut pick = k - 1;
        for (i, w) in self.weights.iter().enumerate() {
            cum += w;
            if u < cum {
                pick = i;
                break;
            }
        }
        self.alpha_t = self.alphas[pick];
        self.alpha_t
    }
}

/// Largest miscoverage `beta` in [`BETA_BOUNDS`] whose interval still
/// contains the observation, found by bisection. `contains(beta)` must be
/// monotone: true for small `beta` (wide intervals), false beyond some
/// threshold. Returns the lower bound if even the widest interval misses and
/// the upper bound if the narrowest one still covers.
pub fn feedback_beta(mut contains: impl FnMut(f64) -> bool) -> f64 {
    let (mut lo, mut hi) = BETA_BOUNDS;
    if !contains(lo) {
        return lo;
    }
    if contains(hi) {
        return hi;
    }
    while hi - lo > BETA_TOL {
        let mid = lo + (hi - lo) / 2.0;
        if contains(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + (hi - lo) / 2.0
}

/// Feedback for one controller step.
#[derive(Debug, Clone)]
pub struct Feedback {
    /// Whether the interval at the controller's current level missed.
    pub breached: bool,
    /// Realised feedback level (see [`feedback_beta`]).
    pub beta: f64,
    /// Breach of each expert's own interval (DtACI only).
    pub expert_breaches: Vec<bool>,
}

/// Miscoverage controller of one symmetric pair.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaController {
    Static { alpha: f64 },
    Aci(AciState),
    DtAci(DtAciState),
}

impl AlphaController {
    pub fn new(mode: AlphaMode, alpha_target: f64, aci_gamma: f64, interval_length: usize) -> Self {
        match mode {
            AlphaMode::Static => AlphaController::Static { alpha: alpha_target },
            AlphaMode::Aci => AlphaController::Aci(AciState::new(alpha_target, aci_gamma)),
            AlphaMode::DtAci => AlphaController::DtAci(DtAciState::new(alpha_target, &DEFAULT_GAMMAS, interval_length)),
        }
    }

    pub fn target(&self) -> f64 {
        match self {
            AlphaController::Static { alpha } => *alpha,
            AlphaController::Aci(s) => s.alpha_target,
            AlphaController::DtAci(s) => s.alpha_target,
        }
    }

    /// Current (unclamped) level.
    pub fn current(&self) -> f64 {
        match self {
            AlphaController::Static { alpha } => *alpha,
            AlphaController::Aci(s) => s.alpha_t,
            AlphaController::DtAci(s) => s.alpha_t,
        }
    }

    /// Levels whose intervals must be checked for feedback: the experts'
    /// levels for DtACI, empty otherwise.
    pub fn expert_levels(&self) -> &[f64] {
        match self {
            AlphaController::DtAci(s) => &s.alphas,
            _ => &[],
        }
    }

    pub fn needs_beta(&self) -> bool {
        matches!(self, AlphaController::DtAci(_))
    }

    pub fn observe<R: Rng + ?Sized>(&mut self, feedback: &Feedback, rng: &mut R) {
        match self {
            AlphaController::Static { .. } => {}
            AlphaController::Aci(s) => s.update(feedback.breached),
            AlphaController::DtAci(s) => {
                s.update(feedback.beta, &feedback.expert_breaches, rng);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn aci_examples() {
        let mut s = AciState::new(0.25, 0.05);
        s.update(true);
        assert!((s.alpha_t - (0.25 - 0.0375)).abs() < 1e-15);
        let mut s = AciState::new(0.25, 0.05);
        s.update(false);
        assert!((s.alpha_t - 0.2625).abs() < 1e-15);
    }

    #[test]
    fn aci_cycle_returns_to_start() {
        let mut s = AciState::new(0.25, 0.05);
        for step in 0..1000 {
            s.update(step % 4 == 0);
            if step % 4 == 3 {
                assert!((s.alpha_t - 0.25).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn default_params() {
        let (eta, sigma) = dtaci_default_params(0.5, 50, 8);
        assert_eq!(sigma, 0.01);
        assert!((eta - ((3.0 / 50.0) * (400f64.ln() + 2.0) / 0.0625).sqrt()).abs() < 1e-12);
        assert!(dtaci_default_params(0.2, 100, 8).0 < dtaci_default_params(0.2, 50, 8).0);
    }

    #[test]
    fn single_expert_reproduces_aci() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut aci = AciState::new(0.2, 0.03);
        let mut dt = DtAciState::new(0.2, &[0.03], 50);
        let mut breach_rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let breached = breach_rng.random::<f64>() < 0.3;
            aci.update(breached);
            let a = dt.update(breach_rng.random(), &[breached], &mut rng);
            assert_eq!(a.to_bits(), aci.alpha_t.to_bits());
        }
    }

    #[test]
    fn equal_losses_keep_uniform_weights() {
        let mut dt = DtAciState::with_params(0.3, &[0.01, 0.02, 0.04], 50, 2.0, 0.0);
        dt.alphas = vec![0.3; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            // Identical levels give identical losses; keep them identical.
            dt.gammas = vec![0.01; 3];
            dt.update(0.5, &[false, false, false], &mut rng);
            for w in &dt.weights {
                assert!((w - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn better_expert_gains_weight() {
        let mut dt = DtAciState::with_params(0.2, &[0.0, 0.0], 50, 1.0, 0.001);
        dt.alphas = vec![0.2, 0.6];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut prev = dt.weights[0];
        for _ in 0..500 {
            dt.update(0.2, &[false, false], &mut rng);
            assert!(dt.weights[0] >= prev - 1e-15);
            prev = dt.weights[0];
        }
        assert!(dt.weights[0] > 0.99);
        let floor = dt.sigma / 2.0;
        assert!(dt.weights.iter().all(|&w| w >= floor - 1e-15));
    }

    #[test]
    fn feedback_on_gaussian_family() {
        let normal = Normal::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let z: f64 = rng.random_range(-2.5..2.5);
            let beta = feedback_beta(|b| z.abs() <= normal.inverse_cdf(1.0 - b / 2.0));
            let expected = (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(BETA_BOUNDS.0, BETA_BOUNDS.1);
            assert!((beta - expected).abs() < 1e-3, "z {z}: {beta} vs {expected}");
        }
        // Centre of a symmetric family is covered by every interval.
        assert_eq!(feedback_beta(|_| true), BETA_BOUNDS.1);
        assert_eq!(feedback_beta(|_| false), BETA_BOUNDS.0);
        // Upper endpoint of the 50% interval.
        let z50 = normal.inverse_cdf(0.75);
        let b = feedback_beta(|b| z50 <= normal.inverse_cdf(1.0 - b / 2.0));
        assert!((b - 0.5).abs() < 1e-3);
    }

    #[test]
    fn aci_long_run_frequency() {
        let alpha = 0.2;
        let gamma = 0.01;
        let t = 5000;
        let mut s = AciState::new(alpha, gamma);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut breaches = 0usize;
        for _ in 0..t {
            // Breach whenever a uniform draw exceeds the interval's coverage.
            let breached = rng.random::<f64>() < s.alpha_t.clamp(0.0, 1.0);
            breaches += usize::from(breached);
            s.update(breached);
        }
        let bound = (alpha.max(1.0 - alpha) + gamma) / (gamma * t as f64);
        assert!(((breaches as f64 / t as f64) - alpha).abs() <= 2.0 * bound);
    }
}
