//! Quantile regression forest.
//!
//! A random forest that keeps every training target. A prediction weights
//! each training point by how often it shares a leaf with the query,
//! normalized per leaf and averaged over trees, and reads quantiles off the
//! weighted empirical distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Presorted, Tree, TreeParams};
use super::{weighted_quantile, QuantileLevels, QuantileModel, SurrogateError};
use crate::space::{Encoding, FeatureDims, FeatureSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; defaults to a third of the dimension.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, min_samples_leaf: 5, max_features: None, bootstrap: true }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.n_trees == 0 || self.min_samples_leaf == 0 || self.max_features == Some(0) {
            return Err(SurrogateError::InvalidSpec("forest counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ForestTree {
    tree: Tree,
    leaves: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct QuantileForest {
    levels: QuantileLevels,
    dims: FeatureDims,
    trees: Vec<ForestTree>,
    y: Vec<f64>,
    order: Vec<usize>,
}

pub fn fit_qrf(x: &FeatureSet, y: &[f64], levels: &QuantileLevels, params: &ForestParams, seed: u64) -> Result<QuantileForest, SurrogateError> {
    params.validate()?;
    let rows = x.view(Encoding::Ordinal);
    let n = y.len();
    let d = rows.first().map_or(0, Vec::len);
    let mtry = params.max_features.unwrap_or_else(|| d.div_ceil(3)).clamp(1, d.max(1));
    let tree_params = TreeParams { max_depth: None, min_leaf: params.min_samples_leaf, mtry: Some(mtry) };
    let presorted = Presorted::new(rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..params.n_trees)
        .map(|_| {
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let (tree, leaves) = Tree::grow_presorted(rows, y, &sample, &presorted, &tree_params, &mut rng);
            ForestTree { tree, leaves }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    Ok(QuantileForest { levels: levels.clone(), dims: x.dims(), trees, y: y.to_vec(), order })
}

impl QuantileForest {
    /// Co-leaf weights of the training points for one query row.
    pub fn weights(&self, row: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.y.len()];
        let per_tree = 1.0 / self.trees.len() as f64;
        for t in &self.trees {
            let members = &t.leaves[t.tree.leaf_of(row)];
            if members.is_empty() {
                continue;
            }
            let share = per_tree / members.len() as f64;
            for &i in members {
                w[i] += share;
            }
        }
        w
    }
}

impl QuantileModel for QuantileForest {
    fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    fn dims(&self) -> FeatureDims {
        self.dims
    }

    fn predict_raw(&self, x: &FeatureSet) -> Vec<Vec<f64>> {
        x.view(Encoding::Ordinal)
            .iter()
            .map(|row| {
                let w = self.weights(row);
                self.levels.taus().iter().map(|&t| weighted_quantile(&self.y, &w, &self.order, t)).collect()
            })
            .collect()
    }
}
