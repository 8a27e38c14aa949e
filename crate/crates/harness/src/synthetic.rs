//! Synthetic benchmarks materialized as lookup tables.
//!
//! Every kind lays a grid over its space and draws one noisy performance per
//! grid point from a stream seeded by `seed`, so the table is a pure
//! function of the spec. Performance is higher-is-better throughout.

use std::f64::consts::PI;

use cqhpo_core::{Configuration, ParamSpace, ParamSpec, ParamValue};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::tabular::{TableEntry, TabularBenchmark};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Negated Branin on a 40 x 50 grid with mild Gaussian noise.
    BraninDiscretized,
    /// Concave quadratic whose noise standard deviation grows with `x1`.
    HeteroskedasticQuadratic,
    /// Smooth surface with a categorical factor and left-skewed exponential
    /// noise.
    AsymmetricNoiseSurface,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::BraninDiscretized => "branin_discretized",
            SyntheticKind::HeteroskedasticQuadratic => "heteroskedastic_quadratic",
            SyntheticKind::AsymmetricNoiseSurface => "asymmetric_noise_surface",
        }
    }

    pub const ALL: [SyntheticKind; 3] =
        [SyntheticKind::BraninDiscretized, SyntheticKind::HeteroskedasticQuadratic, SyntheticKind::AsymmetricNoiseSurface];

    /// Grid points along the first axis when no resolution is given.
    pub fn default_resolution(self) -> usize {
        match self {
            SyntheticKind::BraninDiscretized => 40,
            SyntheticKind::HeteroskedasticQuadratic => 45,
            SyntheticKind::AsymmetricNoiseSurface => 26,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    /// Seed of the noise draws.
    #[serde(default)]
    pub noise_seed: u64,
    /// Grid points along the first axis (Branin uses 5/4 of it along the
    /// second).
    #[serde(default)]
    pub resolution: Option<usize>,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind) -> Self {
        Self { kind, noise_seed: 0, resolution: None }
    }

    pub fn materialize(&self) -> TabularBenchmark {
        let r = self.resolution.unwrap_or_else(|| self.kind.default_resolution()).max(2);
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let axis = |n: usize, lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect() };
        match self.kind {
            SyntheticKind::BraninDiscretized => {
                let space = ParamSpace::new(vec![ParamSpec::continuous("x1", -5.0, 10.0), ParamSpec::continuous("x2", 0.0, 15.0)])
                    .expect("valid space");
                let mut bench = TabularBenchmark::new(self.kind.name(), space);
                for &x1 in &axis(r, -5.0, 10.0) {
                    for &x2 in &axis((r * 5).div_ceil(4), 0.0, 15.0) {
                        let perf = -branin(x1, x2) + 0.5 * normal();
                        let runtime = 1.0 + 0.5 * (x1 + 5.0) / 15.0 + (x2 / 15.0).powi(2);
                        push(&mut bench, vec![ParamValue::Float(x1), ParamValue::Float(x2)], perf, runtime);
                    }
                }
                bench
            }
            SyntheticKind::HeteroskedasticQuadratic => {
                let space = ParamSpace::new(vec![ParamSpec::continuous("x1", 0.0, 1.0), ParamSpec::continuous("x2", 0.0, 1.0)])
                    .expect("valid space");
                let mut bench = TabularBenchmark::new(self.kind.name(), space);
                for &x1 in &axis(r, 0.0, 1.0) {
                    for &x2 in &axis(r, 0.0, 1.0) {
                        let mean = -4.0 * ((x1 - 0.35).powi(2) + 0.5 * (x2 - 0.6).powi(2));
                        let perf = mean + (0.02 + 0.5 * x1) * normal();
                        let runtime = 1.0 + 4.0 * x1 * x2;
                        push(&mut bench, vec![ParamValue::Float(x1), ParamValue::Float(x2)], perf, runtime);
                    }
                }
                bench
            }
            SyntheticKind::AsymmetricNoiseSurface => {
                let kernels = ["linear", "rbf", "poly"];
                let space = ParamSpace::new(vec![
                    ParamSpec::continuous("x1", 0.0, 1.0),
                    ParamSpec::continuous("x2", 0.0, 1.0),
                    ParamSpec::categorical("kernel", kernels),
                ])
                .expect("valid space");
                let mut bench = TabularBenchmark::new(self.kind.name(), space);
                let mut exp = || -> f64 { Exp1.sample(&mut rng) };
                for &x1 in &axis(r, 0.0, 1.0) {
                    for &x2 in &axis(r, 0.0, 1.0) {
                        for (k, kernel) in kernels.iter().enumerate() {
                            let shift = [0.0, 0.3, 0.15][k];
                            let mean = (3.0 * x1).sin() * (2.0 * x2).cos() + shift - (x1 - 0.5).powi(2);
                            // Occasional large drops: a long lower tail.
                            let perf = mean - (0.1 + 0.3 * x2) * exp();
                            let runtime = [1.0, 3.0, 2.0][k] * (1.0 + x1);
                            push(&mut bench, vec![ParamValue::Float(x1), ParamValue::Float(x2), ParamValue::Level(kernel.to_string())], perf, runtime);
                        }
                    }
                }
                bench
            }
        }
    }
}

fn push(bench: &mut TabularBenchmark, values: Vec<ParamValue>, performance: f64, runtime: f64) {
    bench
        .insert(Configuration::new(values), TableEntry { performance, runtime_seconds: Some(runtime) })
        .expect("grid points are valid");
}

pub fn branin(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}
