//! Quantile linear stacking.
//!
//! Members produce out-of-fold quantile predictions; for every level a
//! meta-learner with nonnegative weights and a free intercept is fit on those
//! predictions by exact pinball-loss minimization. Members are then refit on
//! all rows.

use serde::{Deserialize, Serialize};

use super::linprog::pinball_regression;
use super::{
    fit_surrogate, mean_pinball, predict_quantiles, GbmParams, GpParams, LassoParams, QuantileLevels, QuantileModel,
    SurrogateError, SurrogateSpec,
};
use crate::rng::splitmix64;
use crate::space::{FeatureDims, FeatureSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleParams {
    pub members: Vec<SurrogateSpec>,
    pub folds: usize,
    /// L1 weight on the meta-learner weights. Zero keeps the stacked fit at
    /// least as good in-sample as every individual member column.
    pub meta_lambda: f64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self {
            members: vec![
                SurrogateSpec::Qgbm(GbmParams::default()),
                SurrogateSpec::Ql(LassoParams::default()),
                SurrogateSpec::Qgp(GpParams::default()),
            ],
            folds: 5,
            meta_lambda: 0.0,
        }
    }
}

impl EnsembleParams {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.members.is_empty() {
            return Err(SurrogateError::InvalidSpec("ensemble needs at least one member".into()));
        }
        if self.folds < 2 {
            return Err(SurrogateError::InvalidSpec(format!("stacking needs at least 2 folds, got {}", self.folds)));
        }
        if !(self.meta_lambda >= 0.0) || !self.meta_lambda.is_finite() {
            return Err(SurrogateError::InvalidSpec("meta lambda must be finite and >= 0".into()));
        }
        for m in &self.members {
            if matches!(m, SurrogateSpec::Qe(_)) {
                return Err(SurrogateError::InvalidSpec("ensembles cannot be nested".into()));
            }
            m.validate()?;
        }
        Ok(())
    }
}

/// Fit-time information about the stacking step, indexed by level.
#[derive(Debug, Clone)]
pub struct StackingDiagnostics {
    pub members: Vec<String>,
    /// `oof[level][row][member]`.
    pub oof: Vec<Vec<Vec<f64>>>,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    /// In-sample mean pinball loss of the stacked out-of-fold prediction.
    pub meta_loss: Vec<f64>,
    /// In-sample mean pinball loss of each member column on its own.
    pub column_loss: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub struct StackedEnsemble {
    levels: QuantileLevels,
    dims: FeatureDims,
    members: Vec<Box<dyn QuantileModel>>,
    weights: Vec<Vec<f64>>,
    intercepts: Vec<f64>,
    diagnostics: StackingDiagnostics,
}

pub fn fit_stacked_ensemble(
    x: &FeatureSet,
    y: &[f64],
    levels: &QuantileLevels,
    params: &EnsembleParams,
    seed: u64,
) -> Result<StackedEnsemble, SurrogateError> {
    params.validate()?;
    let n = y.len();
    let m_levels = levels.len();
    let k = params.folds.min(n);

    // oof_by_member[member][row][level]
    let mut kept: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
    'members: for (mi, spec) in params.members.iter().enumerate() {
        let mut oof = vec![Vec::new(); n];
        for fold in 0..k {
            let train: Vec<usize> = (0..n).filter(|i| i % k != fold).collect();
            let test: Vec<usize> = (0..n).filter(|i| i % k == fold).collect();
            let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let fold_seed = splitmix64(seed ^ splitmix64((mi * 64 + fold) as u64));
            let fitted = fit_surrogate(spec, &x.subset(&train), &ty, levels, fold_seed)
                .and_then(|model| predict_quantiles(model.as_ref(), &x.subset(&test)));
            match fitted {
                Ok(pred) => {
                    for (row, q) in test.iter().zip(pred.values) {
                        oof[*row] = q;
                    }
                }
                Err(e) => {
                    log::warn!("dropping ensemble member {} after fold failure: {e}", spec.name());
                    continue 'members;
                }
            }
        }
        kept.push((mi, oof));
    }

    let mut members = Vec::new();
    let mut kept_idx = Vec::new();
    let mut kept_oof = Vec::new();
    for (mi, oof) in kept {
        let spec = &params.members[mi];
        match fit_surrogate(spec, x, y, levels, splitmix64(seed ^ 0xA5A5 ^ mi as u64)) {
            Ok(model) => {
                members.push(model);
                kept_idx.push(mi);
                kept_oof.push(oof);
            }
            Err(e) => log::warn!("dropping ensemble member {} after full refit failure: {e}", spec.name()),
        }
    }
    if members.is_empty() {
        return Err(SurrogateError::AllMembersFailed);
    }

    let mut diag = StackingDiagnostics {
        members: kept_idx.iter().map(|&i| params.members[i].name().to_string()).collect(),
        oof: Vec::with_capacity(m_levels),
        weights: Vec::with_capacity(m_levels),
        intercepts: Vec::with_capacity(m_levels),
        meta_loss: Vec::with_capacity(m_levels),
        column_loss: Vec::with_capacity(m_levels),
    };
    for (li, &tau) in levels.taus().iter().enumerate() {
        let z: Vec<Vec<f64>> = (0..n).map(|r| kept_oof.iter().map(|oof| oof[r][li]).collect()).collect();
        let fit = pinball_regression(&z, y, tau, params.meta_lambda, true)?;
        let stacked: Vec<f64> = z
            .iter()
            .map(|row| fit.intercept + row.iter().zip(&fit.weights).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        diag.meta_loss.push(mean_pinball(y, &stacked, tau));
        diag.column_loss.push(
            (0..kept_oof.len())
                .map(|c| mean_pinball(y, &z.iter().map(|r| r[c]).collect::<Vec<_>>(), tau))
                .collect(),
        );
        diag.weights.push(fit.weights);
        diag.intercepts.push(fit.intercept);
        diag.oof.push(z);
    }

    Ok(StackedEnsemble {
        levels: levels.clone(),
        dims: x.dims(),
        members,
        weights: diag.weights.clone(),
        intercepts: diag.intercepts.clone(),
        diagnostics: diag,
    })
}

impl StackedEnsemble {
    pub fn diagnostics(&self) -> &StackingDiagnostics {
        &self.diagnostics
    }
}

impl QuantileModel for StackedEnsemble {
    fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    fn dims(&self) -> FeatureDims {
        self.dims
    }

    fn predict_raw(&self, x: &FeatureSet) -> Vec<Vec<f64>> {
        let member_preds: Vec<Vec<Vec<f64>>> = self
            .members
            .iter()
            .map(|m| {
                let mut p = m.predict_raw(x);
                for row in &mut p {
                    super::repair_crossing(row);
                }
                p
            })
            .collect();
        (0..x.len())
            .map(|r| {
                (0..self.levels.len())
                    .map(|li| {
                        self.intercepts[li]
                            + member_preds.iter().zip(&self.weights[li]).map(|(p, w)| w * p[r][li]).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }
}
