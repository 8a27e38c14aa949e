//! Benchmark plumbing around the optimizer: lookup-table and synthetic
//! objectives, stratification screens, calibration diagnostics and the
//! rank / bootstrap / signed-rank evaluation protocol.

pub mod metrics;
pub mod ranking;
pub mod results;
pub mod screens;
pub mod stats;
pub mod synthetic;
pub mod tabular;

pub use metrics::{IntervalLog, MetricValue, VariantRank};
pub use ranking::{aggregate_rank_paths, bootstrap_rank_ci, wilcoxon_bh, BudgetAxis, RankPath, RunTrace};
pub use results::ResultRecord;
pub use screens::Screen;
pub use synthetic::{SyntheticKind, SyntheticSpec};
pub use tabular::{load_tabular, write_tabular, TabularBenchmark};
