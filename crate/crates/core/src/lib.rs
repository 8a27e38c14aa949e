//! Sequential model-based hyperparameter optimization with conformalized
//! quantile-regression surrogates.
//!
//! The crate is organised bottom-up:
//!
//! - [`space`]: mixed continuous / integer / categorical search spaces,
//!   feature encoding and candidate sampling.
//! - [`surrogates`]: quantile estimators (lasso, boosted trees, regression
//!   forest, Gaussian process) and a quantile linear-stacking ensemble, all
//!   behind the [`surrogates::QuantileModel`] trait.
//! - [`conformal`]: split-conformal and CV+ calibration of symmetric
//!   quantile pairs.
//! - [`adaptive`]: online miscoverage control (ACI and DtACI).
//! - [`acquisition`]: quantile Thompson sampling, optimistic Bayesian
//!   sampling, expected improvement and optimistic conformal UCB.
//! - [`optimizer`]: the study loop tying everything together.

pub mod acquisition;
pub mod adaptive;
pub mod config;
pub mod conformal;
pub mod optimizer;
pub mod rng;
pub mod space;
pub mod surrogates;

pub use acquisition::{AcquisitionKind, AcquisitionSpec, EiMethod};
pub use adaptive::{AciState, AlphaController, DtAciState};
pub use config::{AlphaMode, ConformalMode, StudyConfig};
pub use conformal::{CalibratedInterval, Conformalizer};
pub use optimizer::{
    greedy_calibration_run, run_random_search, run_random_search_observed, run_study, run_study_observed, CalibrationRun, CalibrationVariant, Evaluation,
    EvaluationError, IntervalRecord, Objective, PairInterval, StudyError, StudyResult, Trial, TrialObserver, VariantLog,
};
pub use space::{Configuration, Encoding, FeatureSet, ParamKind, ParamSpace, ParamSpec, ParamValue};
pub use surrogates::{QuantileLevels, QuantileModel, QuantilePrediction, SurrogateSpec};
