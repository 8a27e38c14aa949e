//! Study-level configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Static,
    Aci,
    #[serde(rename = "dtaci")]
    DtAci,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformalMode {
    None,
    #[serde(rename = "scp")]
    Split,
    #[serde(rename = "cv_plus")]
    CvPlus,
    /// CV+ while the study is younger than `schedule_switch_iteration`, split
    /// conformal afterwards.
    AdaptiveSchedule,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("n_quantiles must be even and at least 2, got {0}")]
    Quantiles(usize),
    #[error("min_obs_for_conformalization ({min_obs}) must be at least n_warm_starts ({warm})")]
    ConformalStart { min_obs: usize, warm: usize },
    #[error("n_candidates must be at least 1")]
    Candidates,
    #[error("budget_iterations ({budget}) must be at least n_warm_starts ({warm})")]
    Budget { budget: usize, warm: usize },
    #[error("cv_folds must be at least 2, got {0}")]
    Folds(usize),
    #[error("aci_gamma must be positive, got {0}")]
    Gamma(f64),
}

/// Parameters of one study. Defaults follow the benchmark protocol: 15 warm
/// starts, 100 evaluations, 2000 candidates per iteration, conformalization
/// from 32 observations on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub n_warm_starts: usize,
    pub budget_iterations: usize,
    pub n_candidates: usize,
    pub min_obs_for_conformalization: usize,
    pub n_quantiles: usize,
    pub alpha_mode: AlphaMode,
    pub conformal_mode: ConformalMode,
    pub schedule_switch_iteration: usize,
    pub cv_folds: usize,
    pub aci_gamma: f64,
    pub dtaci_interval_length: usize,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_warm_starts: 15,
            budget_iterations: 100,
            n_candidates: 2000,
            min_obs_for_conformalization: 32,
            n_quantiles: 4,
            alpha_mode: AlphaMode::DtAci,
            conformal_mode: ConformalMode::Split,
            schedule_switch_iteration: 50,
            cv_folds: 5,
            aci_gamma: 0.01,
            dtaci_interval_length: 50,
            seed: 0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_quantiles < 2 || self.n_quantiles % 2 != 0 {
            return Err(ConfigError::Quantiles(self.n_quantiles));
        }
        if self.min_obs_for_conformalization < self.n_warm_starts {
            return Err(ConfigError::ConformalStart {
                min_obs: self.min_obs_for_conformalization,
                warm: self.n_warm_starts,
            });
        }
        if self.n_candidates == 0 {
            return Err(ConfigError::Candidates);
        }
        if self.budget_iterations < self.n_warm_starts {
            return Err(ConfigError::Budget { budget: self.budget_iterations, warm: self.n_warm_starts });
        }
        if self.cv_folds < 2 {
            return Err(ConfigError::Folds(self.cv_folds));
        }
        if !(self.aci_gamma > 0.0) {
            return Err(ConfigError::Gamma(self.aci_gamma));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_protocol() {
        let c = StudyConfig::default();
        assert_eq!(c.n_warm_starts, 15);
        assert_eq!(c.budget_iterations, 100);
        assert_eq!(c.n_candidates, 2000);
        assert_eq!(c.min_obs_for_conformalization, 32);
        assert_eq!(c.n_quantiles, 4);
        assert_eq!(c.alpha_mode, AlphaMode::DtAci);
        assert_eq!(c.conformal_mode, ConformalMode::Split);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invariants_are_enforced() {
        let odd = StudyConfig { n_quantiles: 3, ..Default::default() };
        assert_eq!(odd.validate(), Err(ConfigError::Quantiles(3)));
        let early = StudyConfig { min_obs_for_conformalization: 10, ..Default::default() };
        assert!(matches!(early.validate(), Err(ConfigError::ConformalStart { .. })));
        let none = StudyConfig { n_candidates: 0, ..Default::default() };
        assert_eq!(none.validate(), Err(ConfigError::Candidates));
    }
}
