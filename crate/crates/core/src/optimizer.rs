//! The study loop.
//!
//! A study evaluates `n_warm_starts` uniformly drawn configurations, then
//! repeatedly refits the surrogate on every successful trial, scores a fresh
//! batch of candidates and evaluates the best one. Once enough observations
//! exist the quantile grid is conformalized and each symmetric pair gets its
//! own miscoverage controller.
//!
//! Randomness is split into independent streams (see [`crate::rng`]), so
//! warm starts depend only on the seed and are shared by every algorithm
//! run with that seed, including random search.

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{score_candidates, select_next, AcquisitionError, AcquisitionKind, AcquisitionSpec};
use crate::adaptive::{feedback_beta, AlphaController, Feedback};
use crate::config::{AlphaMode, ConfigError, ConformalMode, StudyConfig};
use crate::conformal::{clamp_alpha, CandidateIntervals, ConformalError, Conformalizer, Method};
use crate::rng::{derive_seed, stream, Stream, StudyRng};
use crate::space::{sample_candidates, sample_from_pool, Configuration, FeatureSet, ParamSpace, SpaceError};
use crate::surrogates::{QuantileLevels, SurrogateError, SurrogateSpec};

/// Confidences monitored by the calibration runs.
pub const MONITORED_CONFIDENCES: [f64; 3] = [0.25, 0.5, 0.75];

/// Fraction of the budget that may fail before a study aborts.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub performance: f64,
    pub runtime_seconds: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("evaluation failed: {0}")]
pub struct EvaluationError(pub String);

/// Something that can be optimized: a search space and a black box.
pub trait Objective: Send + Sync {
    fn space(&self) -> &ParamSpace;

    fn evaluate(&self, config: &Configuration) -> Result<Evaluation, EvaluationError>;

    /// Finite set of admissible configurations, for tabular benchmarks.
    fn pool(&self) -> Option<&[Configuration]> {
        None
    }
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("{failures} failed evaluations exceed {max_fraction} of the budget of {budget}")]
    TooManyFailures { failures: usize, budget: usize, max_fraction: f64 },
}

/// Calibrated interval of one symmetric pair at one sampled point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairInterval {
    pub confidence: f64,
    pub alpha: f64,
    pub lo: f64,
    pub hi: f64,
    pub breached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    /// Zero-based evaluation index.
    pub iteration: usize,
    pub config: Configuration,
    /// `None` for a failed evaluation.
    pub performance: Option<f64>,
    pub runtime_seconds: f64,
    pub best_so_far: Option<f64>,
    /// Effective miscoverage per pair used to pick this trial.
    pub alpha_state: Option<Vec<f64>>,
    pub intervals: Option<Vec<PairInterval>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub trials: Vec<Trial>,
    /// Seconds spent per iteration, surrogate work plus evaluation.
    pub wallclock_seconds: Vec<f64>,
}

impl StudyResult {
    pub fn best_so_far(&self) -> Vec<Option<f64>> {
        self.trials.iter().map(|t| t.best_so_far).collect()
    }

    pub fn best(&self) -> Option<f64> {
        self.trials.last().and_then(|t| t.best_so_far)
    }
}

/// Called once per finished trial with the trial and its wallclock seconds.
pub type TrialObserver<'a> = dyn FnMut(&Trial, f64) + 'a;

struct History {
    trials: Vec<Trial>,
    emitted: usize,
    seen: HashSet<Configuration>,
    wallclock: Vec<f64>,
    best: Option<f64>,
    failures: usize,
    budget: usize,
}

impl History {
    fn new(budget: usize) -> Self {
        Self { trials: Vec::with_capacity(budget), emitted: 0, seen: HashSet::new(), wallclock: Vec::new(), best: None, failures: 0, budget }
    }

    fn successes(&self) -> (Vec<Configuration>, Vec<f64>) {
        self.trials
            .iter()
            .filter_map(|t| t.performance.map(|p| (t.config.clone(), p)))
            .unzip()
    }

    fn evaluate(&mut self, objective: &dyn Objective, config: Configuration, started: Instant) -> Result<Option<f64>, StudyError> {
        let outcome = objective.evaluate(&config);
        let (performance, runtime_seconds) = match outcome {
            Ok(e) if e.performance.is_finite() => (Some(e.performance), e.runtime_seconds),
            Ok(e) => {
                log::warn!("non-finite performance {} treated as failure", e.performance);
                (None, e.runtime_seconds)
            }
            Err(e) => {
                log::warn!("{e}");
                (None, 0.0)
            }
        };
        if let Some(p) = performance {
            self.best = Some(self.best.map_or(p, |b| b.max(p)));
        } else {
            self.failures += 1;
        }
        self.seen.insert(config.clone());
        self.trials.push(Trial {
            iteration: self.trials.len(),
            config,
            performance,
            runtime_seconds,
            best_so_far: self.best,
            alpha_state: None,
            intervals: None,
        });
        self.wallclock.push(started.elapsed().as_secs_f64());
        if self.failures as f64 > MAX_FAILURE_FRACTION * self.budget as f64 {
            return Err(StudyError::TooManyFailures {
                failures: self.failures,
                budget: self.budget,
                max_fraction: MAX_FAILURE_FRACTION,
            });
        }
        Ok(performance)
    }

    /// Hands every trial not yet reported to the observer.
    fn flush(&mut self, observer: &mut TrialObserver<'_>) {
        for i in self.emitted..self.trials.len() {
            observer(&self.trials[i], self.wallclock[i]);
        }
        self.emitted = self.trials.len();
    }

    fn into_result(self) -> StudyResult {
        StudyResult { trials: self.trials, wallclock_seconds: self.wallclock }
    }
}

fn draw_unseen(objective: &dyn Objective, rng: &mut StudyRng, seen: &HashSet<Configuration>) -> Option<Configuration> {
    match objective.pool() {
        Some(pool) => sample_from_pool(pool, 1, rng, Some(seen)).pop(),
        None => (0..1000).map(|_| objective.space().sample(rng)).find(|c| !seen.contains(c)),
    }
}

fn draw_candidates(objective: &dyn Objective, n: usize, rng: &mut StudyRng, seen: &HashSet<Configuration>) -> Vec<Configuration> {
    match objective.pool() {
        Some(pool) => sample_from_pool(pool, n, rng, Some(seen)),
        None => sample_candidates(objective.space(), n, rng, Some(seen)),
    }
}

/// Evaluates the warm starts; returns `false` if the space ran out.
fn warm_start(objective: &dyn Objective, config: &StudyConfig, rng: &mut StudyRng, hist: &mut History) -> Result<bool, StudyError> {
    for _ in 0..config.n_warm_starts {
        let started = Instant::now();
        let Some(c) = draw_unseen(objective, rng, &hist.seen) else {
            return Ok(false);
        };
        hist.evaluate(objective, c, started)?;
    }
    Ok(true)
}

/// Uniform random search for the full budget. Its first draws coincide
/// with the warm starts of every model-based study using the same seed.
pub fn run_random_search(objective: &dyn Objective, config: &StudyConfig) -> Result<StudyResult, StudyError> {
    run_random_search_observed(objective, config, &mut |_, _| {})
}

/// [`run_random_search`], reporting each trial as soon as it is final.
pub fn run_random_search_observed(
    objective: &dyn Objective,
    config: &StudyConfig,
    observer: &mut TrialObserver<'_>,
) -> Result<StudyResult, StudyError> {
    config.validate()?;
    let mut rng = stream(config.seed, Stream::WarmStart, 0);
    let mut hist = History::new(config.budget_iterations);
    for _ in 0..config.budget_iterations {
        let started = Instant::now();
        let Some(c) = draw_unseen(objective, &mut rng, &hist.seen) else {
            break;
        };
        hist.evaluate(objective, c, started)?;
        hist.flush(observer);
    }
    Ok(hist.into_result())
}

/// Calibration method in force for a study with `n_obs` successful
/// observations at evaluation index `iteration`.
pub fn conformal_method(config: &StudyConfig, n_obs: usize, iteration: usize) -> Method {
    if n_obs < config.min_obs_for_conformalization {
        return Method::Raw;
    }
    match config.conformal_mode {
        ConformalMode::None => Method::Raw,
        ConformalMode::Split => Method::Split,
        ConformalMode::CvPlus => Method::CvPlus { folds: config.cv_folds },
        ConformalMode::AdaptiveSchedule => {
            if iteration < config.schedule_switch_iteration {
                Method::CvPlus { folds: config.cv_folds }
            } else {
                Method::Split
            }
        }
    }
}

/// Levels used by a study with this acquisition.
pub fn study_levels(config: &StudyConfig, acquisition: &AcquisitionSpec) -> Result<QuantileLevels, SurrogateError> {
    match acquisition.kind {
        AcquisitionKind::UcbOptimistic => QuantileLevels::from_confidences(&[1.0 - acquisition.ucb_alpha]),
        _ => QuantileLevels::uniform(config.n_quantiles),
    }
}

/// Feeds the observation at the chosen point back into every controller and
/// returns the logged intervals.
fn record_feedback(
    chosen: &CandidateIntervals,
    controllers: &mut [AlphaController],
    alphas: &[f64],
    y: f64,
    rng: &mut StudyRng,
) -> Vec<PairInterval> {
    let mut logged = Vec::with_capacity(controllers.len());
    for (pi, ctrl) in controllers.iter_mut().enumerate() {
        let iv = chosen.interval(pi, alphas[pi]);
        let breached = !iv.contains(y);
        logged.push(PairInterval {
            confidence: chosen.pairs()[pi].confidence(),
            alpha: iv.effective_alpha,
            lo: iv.lo,
            hi: iv.hi,
            breached,
        });
        let (beta, expert_breaches) = if ctrl.needs_beta() {
            let beta = feedback_beta(|b| chosen.interval(pi, b).contains(y));
            let experts = ctrl
                .expert_levels()
                .iter()
                .map(|&a| !chosen.interval(pi, clamp_alpha(a)).contains(y))
                .collect();
            (beta, experts)
        } else {
            (f64::NAN, Vec::new())
        };
        ctrl.observe(&Feedback { breached, beta, expert_breaches }, rng);
    }
    logged
}

/// Runs one model-based study.
pub fn run_study(
    objective: &dyn Objective,
    config: &StudyConfig,
    surrogate: &SurrogateSpec,
    acquisition: &AcquisitionSpec,
) -> Result<StudyResult, StudyError> {
    run_study_observed(objective, config, surrogate, acquisition, &mut |_, _| {})
}

/// [`run_study`], reporting each trial as soon as it is final.
pub fn run_study_observed(
    objective: &dyn Objective,
    config: &StudyConfig,
    surrogate: &SurrogateSpec,
    acquisition: &AcquisitionSpec,
    observer: &mut TrialObserver<'_>,
) -> Result<StudyResult, StudyError> {
    config.validate()?;
    surrogate.validate()?;
    acquisition.validate()?;
    let space = objective.space();
    let levels = study_levels(config, acquisition)?;
    let pairs = levels.pairs();
    let mut controllers: Vec<AlphaController> = pairs
        .iter()
        .map(|p| AlphaController::new(config.alpha_mode, p.alpha, config.aci_gamma, config.dtaci_interval_length))
        .collect();

    let mut hist = History::new(config.budget_iterations);
    let mut warm_rng = stream(config.seed, Stream::WarmStart, 0);
    let warm_complete = warm_start(objective, config, &mut warm_rng, &mut hist)?;
    hist.flush(observer);
    if !warm_complete {
        return Ok(hist.into_result());
    }

    for t in config.n_warm_starts..config.budget_iterations {
        hist.flush(observer);
        let started = Instant::now();
        let mut cand_rng = stream(config.seed, Stream::Candidates, t as u64);
        let candidates = draw_candidates(objective, config.n_candidates, &mut cand_rng, &hist.seen);
        if candidates.is_empty() {
            log::info!("search space exhausted after {} evaluations", hist.trials.len());
            break;
        }
        let (configs, y) = hist.successes();
        if y.is_empty() {
            // Nothing to learn from yet; fall back to the first candidate.
            let c = candidates.into_iter().next().expect("nonempty");
            hist.evaluate(objective, c, started)?;
            continue;
        }
        let method = conformal_method(config, y.len(), t);
        let x = FeatureSet::encode(space, &configs)?;
        let cx = FeatureSet::encode(space, &candidates)?;
        let fit_seed = derive_seed(config.seed, Stream::Surrogate, t as u64);
        let conf = Conformalizer::fit(method, surrogate, &x, &y, &levels, fit_seed)?;
        let cis = conf.candidates(&cx)?;

        let calibrated = method != Method::Raw;
        let alphas: Vec<f64> = controllers
            .iter()
            .map(|c| if calibrated { clamp_alpha(c.current()) } else { c.target() })
            .collect();
        let grids: Vec<Vec<f64>> = cis.iter().map(|c| c.grid(&alphas)).collect();
        let expectations: Vec<f64> = cis.iter().map(|c| c.expectation).collect();
        let f_star = hist.best.unwrap_or(f64::NEG_INFINITY);
        let mut acq_rng = stream(config.seed, Stream::Acquisition, t as u64);
        let scores = score_candidates(acquisition, &grids, &expectations, levels.taus(), f_star, &mut acq_rng);
        let pick = select_next(&scores)?;

        let chosen = cis[pick].clone();
        let observed = hist.evaluate(objective, candidates[pick].clone(), started)?;
        let trial = hist.trials.last_mut().expect("just evaluated");
        trial.alpha_state = Some(alphas.clone());
        if calibrated {
            if let Some(y_new) = observed {
                let mut alpha_rng = stream(config.seed, Stream::Alpha, t as u64);
                trial.intervals = Some(record_feedback(&chosen, &mut controllers, &alphas, y_new, &mut alpha_rng));
            }
        }
    }
    hist.flush(observer);
    Ok(hist.into_result())
}

/// One conformal treatment compared in a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationVariant {
    pub name: String,
    pub conformal: ConformalMode,
    pub alpha: AlphaMode,
}

impl CalibrationVariant {
    pub fn new(conformal: ConformalMode, alpha: AlphaMode) -> Self {
        let base = match conformal {
            ConformalMode::None => "unconformalized",
            ConformalMode::Split => "scp",
            ConformalMode::CvPlus => "cv_plus",
            ConformalMode::AdaptiveSchedule => "schedule",
        };
        let name = match (conformal, alpha) {
            (ConformalMode::None, _) | (_, AlphaMode::Static) => base.to_string(),
            (_, AlphaMode::Aci) => format!("{base}+aci"),
            (_, AlphaMode::DtAci) => format!("{base}+dtaci"),
        };
        Self { name, conformal, alpha }
    }

    /// Unconformalized, then split and CV+ each with static, ACI and DtACI
    /// miscoverage.
    pub fn standard() -> Vec<Self> {
        let mut v = vec![Self::new(ConformalMode::None, AlphaMode::Static)];
        for mode in [ConformalMode::Split, ConformalMode::CvPlus] {
            for alpha in [AlphaMode::Static, AlphaMode::Aci, AlphaMode::DtAci] {
                v.push(Self::new(mode, alpha));
            }
        }
        v
    }
}

/// Intervals of every monitored confidence at one sampled point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub iteration: usize,
    pub observed: f64,
    pub intervals: Vec<PairInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantLog {
    pub variant: CalibrationVariant,
    pub records: Vec<IntervalRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    /// The shared sampling trajectory.
    pub trials: Vec<Trial>,
    pub variants: Vec<VariantLog>,
}

fn variant_method(mode: ConformalMode, folds: usize) -> Method {
    match mode {
        ConformalMode::None => Method::Raw,
        ConformalMode::Split => Method::Split,
        ConformalMode::CvPlus | ConformalMode::AdaptiveSchedule => Method::CvPlus { folds },
    }
}

/// Greedy expectation-maximization run that logs intervals of several
/// conformal variants along one shared trajectory.
///
/// Sampling depends only on the surrogate's expectation, never on any
/// variant, so every variant sees the same points. Logging starts once the
/// history holds `min_obs_for_conformalization` observations.
pub fn greedy_calibration_run(
    objective: &dyn Objective,
    config: &StudyConfig,
    surrogate: &SurrogateSpec,
    variants: &[CalibrationVariant],
) -> Result<CalibrationRun, StudyError> {
    config.validate()?;
    surrogate.validate()?;
    let space = objective.space();
    let levels = QuantileLevels::from_confidences(&MONITORED_CONFIDENCES)?;
    let pairs = levels.pairs();
    let mut controllers: Vec<Vec<AlphaController>> = variants
        .iter()
        .map(|v| {
            pairs
                .iter()
                .map(|p| AlphaController::new(v.alpha, p.alpha, config.aci_gamma, config.dtaci_interval_length))
                .collect()
        })
        .collect();
    let mut logs: Vec<VariantLog> = variants.iter().map(|v| VariantLog { variant: v.clone(), records: Vec::new() }).collect();

    let mut hist = History::new(config.budget_iterations);
    let mut warm_rng = stream(config.seed, Stream::WarmStart, 0);
    if !warm_start(objective, config, &mut warm_rng, &mut hist)? {
        return Ok(CalibrationRun { trials: hist.trials, variants: logs });
    }

    for t in config.n_warm_starts..config.budget_iterations {
        let started = Instant::now();
        let mut cand_rng = stream(config.seed, Stream::Candidates, t as u64);
        let candidates = draw_candidates(objective, config.n_candidates, &mut cand_rng, &hist.seen);
        if candidates.is_empty() {
            break;
        }
        let (configs, y) = hist.successes();
        if y.is_empty() {
            let c = candidates.into_iter().next().expect("nonempty");
            hist.evaluate(objective, c, started)?;
            continue;
        }
        let x = FeatureSet::encode(space, &configs)?;
        let cx = FeatureSet::encode(space, &candidates)?;
        let fit_seed = derive_seed(config.seed, Stream::Surrogate, t as u64);
        let full = Conformalizer::fit(Method::Raw, surrogate, &x, &y, &levels, fit_seed)?;
        let full_cis = full.candidates(&cx)?;
        let expectations: Vec<f64> = full_cis.iter().map(|c| c.expectation).collect();
        let pick = select_next(&expectations)?;
        let chosen_x = cx.row(pick);

        let logging = y.len() >= config.min_obs_for_conformalization;
        // Calibrated views of the chosen point, one per distinct method.
        let mut views: Vec<(Method, CandidateIntervals)> = Vec::new();
        if logging {
            views.push((Method::Raw, full_cis[pick].clone()));
            for v in variants {
                let method = variant_method(v.conformal, config.cv_folds);
                if views.iter().any(|(m, _)| *m == method) {
                    continue;
                }
                let conf = Conformalizer::fit(method, surrogate, &x, &y, &levels, fit_seed)?;
                let ci = conf.candidates(&chosen_x)?.pop().expect("one row");
                views.push((method, ci));
            }
        }

        let observed = hist.evaluate(objective, candidates[pick].clone(), started)?;
        let Some(y_new) = observed else { continue };
        if !logging {
            continue;
        }
        let mut alpha_rng = stream(config.seed, Stream::Alpha, t as u64);
        for (vi, v) in variants.iter().enumerate() {
            let method = variant_method(v.conformal, config.cv_folds);
            let ci = &views.iter().find(|(m, _)| *m == method).expect("view fitted").1;
            let alphas: Vec<f64> = controllers[vi].iter().map(|c| clamp_alpha(c.current())).collect();
            let intervals = record_feedback(ci, &mut controllers[vi], &alphas, y_new, &mut alpha_rng);
            logs[vi].records.push(IntervalRecord { iteration: t, observed: y_new, intervals });
        }
    }
    Ok(CalibrationRun { trials: hist.trials, variants: logs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ParamSpec, ParamValue};
    use crate::surrogates::GbmParams;

    struct Quadratic {
        space: ParamSpace,
    }

    impl Quadratic {
        fn new() -> Self {
            Self { space: ParamSpace::new(vec![ParamSpec::continuous("x", -1.0, 1.0), ParamSpec::integer("k", 0, 4)]).unwrap() }
        }
    }

    impl Objective for Quadratic {
        fn space(&self) -> &ParamSpace {
            &self.space
        }

        fn evaluate(&self, c: &Configuration) -> Result<Evaluation, EvaluationError> {
            let (ParamValue::Float(x), ParamValue::Int(k)) = (&c.values[0], &c.values[1]) else {
                return Err(EvaluationError("bad config".into()));
            };
            Ok(Evaluation { performance: -(x - 0.3).powi(2) - 0.1 * (*k as f64 - 2.0).abs(), runtime_seconds: 0.01 })
        }
    }

    fn small_config(seed: u64) -> StudyConfig {
        StudyConfig { budget_iterations: 40, n_candidates: 200, seed, ..StudyConfig::default() }
    }

    fn fast_gbm() -> SurrogateSpec {
        SurrogateSpec::Qgbm(GbmParams { n_estimators: 20, ..GbmParams::default() })
    }

    #[test]
    fn pure_warm_start_budget_is_random_search() {
        let obj = Quadratic::new();
        let cfg = StudyConfig { budget_iterations: 15, ..small_config(3) };
        let study = run_study(&obj, &cfg, &fast_gbm(), &AcquisitionSpec::default()).unwrap();
        let rs = run_random_search(&obj, &cfg).unwrap();
        assert_eq!(study.trials, rs.trials);
        assert!(study.trials.iter().all(|t| t.alpha_state.is_none()));
    }

    #[test]
    fn study_is_deterministic_and_monotone() {
        let obj = Quadratic::new();
        let cfg = small_config(5);
        let a = run_study(&obj, &cfg, &fast_gbm(), &AcquisitionSpec::default()).unwrap();
        let b = run_study(&obj, &cfg, &fast_gbm(), &AcquisitionSpec::default()).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.trials.len(), 40);
        let best: Vec<f64> = a.best_so_far().into_iter().map(|b| b.unwrap()).collect();
        assert!(best.windows(2).all(|w| w[0] <= w[1]));
        let running = a.trials.iter().scan(f64::NEG_INFINITY, |m, t| {
            *m = m.max(t.performance.unwrap());
            Some(*m)
        });
        assert!(best.iter().zip(running).all(|(x, y)| *x == y));
        // Intervals appear once 32 observations exist.
        assert!(a.trials[31].intervals.is_none());
        assert!(a.trials[32].intervals.is_some());
    }

    #[test]
    fn warm_starts_shared_across_algorithms() {
        let obj = Quadratic::new();
        let cfg = small_config(11);
        let ts = run_study(&obj, &cfg, &fast_gbm(), &AcquisitionSpec::of(AcquisitionKind::Ts)).unwrap();
        let ei = run_study(&obj, &cfg, &fast_gbm(), &AcquisitionSpec::of(AcquisitionKind::Ei)).unwrap();
        assert_eq!(ts.trials[..15], ei.trials[..15]);
    }

    struct Flaky {
        inner: Quadratic,
    }

    impl Objective for Flaky {
        fn space(&self) -> &ParamSpace {
            self.inner.space()
        }

        fn evaluate(&self, c: &Configuration) -> Result<Evaluation, EvaluationError> {
            match c.values[1] {
                ParamValue::Int(0) => Err(EvaluationError("crash".into())),
                _ => self.inner.evaluate(c),
            }
        }
    }

    #[test]
    fn failures_are_recorded_then_abort() {
        let obj = Flaky { inner: Quadratic::new() };
        let cfg = StudyConfig { budget_iterations: 30, ..small_config(2) };
        match run_random_search(&obj, &cfg) {
            Ok(r) => {
                let failed = r.trials.iter().filter(|t| t.performance.is_none()).count();
                assert!(failed as f64 <= 0.2 * 30.0);
            }
            Err(StudyError::TooManyFailures { failures, .. }) => assert_eq!(failures, 7),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn calibration_variants_share_trajectory() {
        let obj = Quadratic::new();
        let cfg = StudyConfig { budget_iterations: 36, n_candidates: 100, seed: 1, ..StudyConfig::default() };
        let run = greedy_calibration_run(&obj, &cfg, &fast_gbm(), &CalibrationVariant::standard()).unwrap();
        assert_eq!(run.variants.len(), 7);
        assert_eq!(run.trials.len(), 36);
        for v in &run.variants {
            assert_eq!(v.records.len(), 4);
            assert_eq!(v.records[0].iteration, 32);
            assert_eq!(v.records[0].intervals.len(), 3);
        }
        let raw = &run.variants[0];
        let scp = &run.variants[1];
        assert_eq!(raw.records[0].observed, scp.records[0].observed);
    }
}
