//! L1-penalized linear quantile regression.

use serde::{Deserialize, Serialize};

use super::linprog::pinball_regression;
use super::{empirical_quantile, QuantileLevels, QuantileModel, SurrogateError};
use crate::space::{Encoding, FeatureDims, FeatureSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoParams {
    /// L1 weight on the slopes, applied to standardized targets.
    pub lambda: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self { lambda: 0.01 }
    }
}

impl LassoParams {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(SurrogateError::InvalidSpec(format!("lasso lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// A single fitted linear quantile function.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQuantile {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearQuantile {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Minimizes mean pinball loss plus `lambda * |w|_1` over linear functions
/// of the rows of `x`, with an unpenalized intercept. Columns without
/// variance get a zero weight; if every column is constant the result is the
/// intercept-only model at the empirical `beta`-quantile of `y`.
pub fn fit_quantile_lasso(x: &[Vec<f64>], y: &[f64], beta: f64, lambda: f64) -> Result<LinearQuantile, SurrogateError> {
    if y.len() < 2 {
        return Err(SurrogateError::EmptyData);
    }
    if x.len() != y.len() {
        return Err(SurrogateError::LengthMismatch { rows: x.len(), targets: y.len() });
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(SurrogateError::InvalidLevel(beta));
    }
    let p = x[0].len();
    let active: Vec<usize> = (0..p)
        .filter(|&j| {
            let first = x[0][j];
            x.iter().any(|r| r[j] != first)
        })
        .collect();
    if active.is_empty() {
        return Ok(LinearQuantile { intercept: empirical_quantile(y, beta), weights: vec![0.0; p] });
    }
    let reduced: Vec<Vec<f64>> = x.iter().map(|r| active.iter().map(|&j| r[j]).collect()).collect();
    let fit = pinball_regression(&reduced, y, beta, lambda, false)?;
    let mut weights = vec![0.0; p];
    for (k, &j) in active.iter().enumerate() {
        weights[j] = fit.weights[k];
    }
    Ok(LinearQuantile { intercept: fit.intercept, weights })
}

/// One linear quantile function per level, fit on the one-hot view.
#[derive(Debug, Clone)]
pub struct QuantileLasso {
    levels: QuantileLevels,
    dims: FeatureDims,
    models: Vec<LinearQuantile>,
}

impl QuantileLasso {
    pub fn fit(x: &FeatureSet, y: &[f64], levels: &QuantileLevels, params: &LassoParams) -> Result<Self, SurrogateError> {
        let rows = x.view(Encoding::OneHot);
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        let z: Vec<f64> = y.iter().map(|v| (v - mean) / scale).collect();
        let models = levels
            .taus()
            .iter()
            .map(|&tau| {
                let m = fit_quantile_lasso(rows, &z, tau, params.lambda)?;
                Ok(LinearQuantile {
                    intercept: mean + scale * m.intercept,
                    weights: m.weights.iter().map(|w| w * scale).collect(),
                })
            })
            .collect::<Result<Vec<_>, SurrogateError>>()?;
        Ok(Self { levels: levels.clone(), dims: x.dims(), models })
    }

    pub fn models(&self) -> &[LinearQuantile] {
        &self.models
    }
}

impl QuantileModel for QuantileLasso {
    fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    fn dims(&self) -> FeatureDims {
        self.dims
    }

    fn predict_raw(&self, x: &FeatureSet) -> Vec<Vec<f64>> {
        x.view(Encoding::OneHot)
            .iter()
            .map(|row| self.models.iter().map(|m| m.predict(row)).collect())
            .collect()
    }
}
