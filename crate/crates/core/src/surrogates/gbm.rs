//! Quantile gradient boosting.
//!
//! Each level gets its own boosting run. Trees are grown by least squares on
//! the pinball negative gradient, which only fixes the partition; each leaf
//! then moves by the level's quantile of the residuals it contains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Presorted, Tree, TreeParams};
use super::{empirical_quantile, mean_pinball, QuantileLevels, QuantileModel, SurrogateError};
use crate::space::{Encoding, FeatureDims, FeatureSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self { n_estimators: 100, learning_rate: 0.1, max_depth: 3, min_samples_leaf: 3 }
    }
}

impl GbmParams {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.n_estimators == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(SurrogateError::InvalidSpec("boosting counts must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(SurrogateError::InvalidSpec(format!("learning rate must lie in (0, 1], got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// A boosted model for one quantile level.
#[derive(Debug, Clone)]
pub struct SingleGbm {
    pub tau: f64,
    init: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
    /// Mean training pinball loss after the initial constant and after each
    /// stage.
    pub train_loss: Vec<f64>,
}

impl SingleGbm {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }
}

pub fn fit_qgbm_single(x: &[Vec<f64>], y: &[f64], tau: f64, params: &GbmParams, seed: u64) -> Result<SingleGbm, SurrogateError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SurrogateError::InvalidLevel(tau));
    }
    params.validate()?;
    let n = y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = empirical_quantile(y, tau);
    let mut f = vec![init; n];
    let tree_params = TreeParams { max_depth: Some(params.max_depth), min_leaf: params.min_samples_leaf, mtry: None };
    let rows: Vec<usize> = (0..n).collect();
    let presorted = Presorted::new(x);
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut train_loss = Vec::with_capacity(params.n_estimators + 1);
    train_loss.push(mean_pinball(y, &f, tau));
    for _ in 0..params.n_estimators {
        // Exact fits get a zero gradient so that ties at the current prediction
        // do not hide the remaining error from the tree.
        let grad: Vec<f64> = y
            .iter()
            .zip(&f)
            .map(|(t, p)| match t.partial_cmp(p) {
                Some(std::cmp::Ordering::Greater) => tau,
                Some(std::cmp::Ordering::Less) => tau - 1.0,
                _ => 0.0,
            })
            .collect();
        let (mut tree, leaves) = Tree::grow_presorted(x, &grad, &rows, &presorted, &tree_params, &mut rng);
        for (leaf, members) in leaves.iter().enumerate() {
            let resid: Vec<f64> = members.iter().map(|&i| y[i] - f[i]).collect();
            let step = if resid.is_empty() { 0.0 } else { empirical_quantile(&resid, tau) };
            tree.set_leaf_value(leaf, step);
            for &i in members {
                f[i] += params.learning_rate * step;
            }
        }
        trees.push(tree);
        train_loss.push(mean_pinball(y, &f, tau));
    }
    Ok(SingleGbm { tau, init, learning_rate: params.learning_rate, trees, train_loss })
}

/// Boosted quantile model over the ordinal view.
#[derive(Debug, Clone)]
pub struct QuantileGbm {
    levels: QuantileLevels,
    dims: FeatureDims,
    boosters: Vec<SingleGbm>,
}

pub fn fit_qgbm(x: &FeatureSet, y: &[f64], levels: &QuantileLevels, params: &GbmParams, seed: u64) -> Result<QuantileGbm, SurrogateError> {
    let rows = x.view(Encoding::Ordinal);
    let boosters = levels
        .taus()
        .iter()
        .map(|&tau| fit_qgbm_single(rows, y, tau, params, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QuantileGbm { levels: levels.clone(), dims: x.dims(), boosters })
}

impl QuantileGbm {
    pub fn boosters(&self) -> &[SingleGbm] {
        &self.boosters
    }
}

impl QuantileModel for QuantileGbm {
    fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    fn dims(&self) -> FeatureDims {
        self.dims
    }

    fn predict_raw(&self, x: &FeatureSet) -> Vec<Vec<f64>> {
        x.view(Encoding::Ordinal)
            .iter()
            .map(|row| self.boosters.iter().map(|b| b.predict(row)).collect())
            .collect()
    }
}
