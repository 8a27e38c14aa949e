//! Rank paths across algorithms, dataset-bootstrap bands and pairwise
//! significance tests.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{average_ranks, benjamini_hochberg, percentile, wilcoxon_signed_rank, StatsError};

/// Budget points on the relative-runtime axis.
pub const RUNTIME_POINTS: usize = 100;
pub const MIN_WILCOXON_PAIRS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("no runs")]
    Empty,
    #[error("incomplete result grid, missing: {}", .0.join(", "))]
    MissingCells(Vec<String>),
    #[error("duplicate run {0}")]
    Duplicate(String),
    #[error("bootstrap needs at least 2 datasets, got {0}")]
    TooFewDatasets(usize),
    #[error("pairwise tests need at least {MIN_WILCOXON_PAIRS} paired units, got {0}")]
    TooFewPairs(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Trajectory of one (algorithm, dataset, seed) study.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub algorithm: String,
    pub dataset: String,
    pub seed: u64,
    /// Best performance after each trial; `-inf` before the first success.
    pub best_so_far: Vec<f64>,
    /// Cumulative cost in seconds after each trial.
    pub cumulative_cost: Vec<f64>,
}

impl RunTrace {
    fn label(&self) -> String {
        format!("{}/{}/seed_{}", self.dataset, self.algorithm, self.seed)
    }

    fn final_best(&self) -> f64 {
        self.best_so_far.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    fn best_at_iteration(&self, b: usize) -> f64 {
        match self.best_so_far.len() {
            0 => f64::NEG_INFINITY,
            n => self.best_so_far[b.min(n) - 1],
        }
    }

    fn best_within(&self, budget: f64) -> f64 {
        let k = self.cumulative_cost.partition_point(|c| *c <= budget * (1.0 + 1e-12));
        if k == 0 {
            f64::NEG_INFINITY
        } else {
            self.best_so_far[k - 1]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetAxis {
    Iteration,
    /// Fraction of the largest total cost among the algorithms of the same
    /// (dataset, seed).
    Runtime,
}

/// Runs checked to form a complete algorithms x datasets x seeds grid.
#[derive(Debug)]
pub struct Grid<'a> {
    pub algorithms: Vec<String>,
    pub datasets: Vec<String>,
    /// Per dataset, its seeds and the runs `[seed][algorithm]`.
    cells: Vec<Vec<(u64, Vec<&'a RunTrace>)>>,
}

impl<'a> Grid<'a> {
    /// Every algorithm must have run every seed seen for a dataset, and every
    /// dataset must have every algorithm.
    pub fn new(runs: &'a [RunTrace]) -> Result<Self, RankError> {
        if runs.is_empty() {
            return Err(RankError::Empty);
        }
        let algorithms: Vec<String> = runs.iter().map(|r| r.algorithm.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let mut by_key: BTreeMap<(&str, u64, &str), &RunTrace> = BTreeMap::new();
        for r in runs {
            if by_key.insert((r.dataset.as_str(), r.seed, r.algorithm.as_str()), r).is_some() {
                return Err(RankError::Duplicate(r.label()));
            }
        }
        let mut seeds: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
        for r in runs {
            seeds.entry(&r.dataset).or_default().insert(r.seed);
        }
        let mut missing = Vec::new();
        let mut cells = Vec::new();
        for (dataset, ds) in &seeds {
            let mut rows = Vec::new();
            for &seed in ds {
                let mut row = Vec::new();
                for a in &algorithms {
                    match by_key.get(&(*dataset, seed, a.as_str())) {
                        Some(r) => row.push(*r),
                        None => missing.push(format!("{dataset}/{a}/seed_{seed}")),
                    }
                }
                rows.push((seed, row));
            }
            cells.push(rows);
        }
        if !missing.is_empty() {
            return Err(RankError::MissingCells(missing));
        }
        Ok(Self { algorithms, datasets: seeds.keys().map(|d| d.to_string()).collect(), cells })
    }

    /// Final best performance per algorithm over (dataset, seed) units in
    /// sorted order.
    pub fn final_performance(&self) -> Vec<Vec<f64>> {
        (0..self.algorithms.len())
            .map(|a| self.cells.iter().flat_map(|rows| rows.iter().map(move |(_, row)| row[a].final_best())).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankPath {
    pub axis: BudgetAxis,
    pub algorithms: Vec<String>,
    pub datasets: Vec<String>,
    /// Iterations, or relative budget fractions.
    pub budget: Vec<f64>,
    /// `[dataset][algorithm][point]`, averaged over seeds.
    pub dataset_ranks: Vec<Vec<Vec<f64>>>,
    /// `[algorithm][point]`, averaged over datasets.
    pub mean_rank: Vec<Vec<f64>>,
}

/// Ranks algorithms by best-so-far at every budget point (rank 1 is best,
/// ties share), averages over seeds within a dataset and then over
/// datasets.
pub fn aggregate_rank_paths(runs: &[RunTrace], axis: BudgetAxis) -> Result<RankPath, RankError> {
    let grid = Grid::new(runs)?;
    let n_alg = grid.algorithms.len();
    let budget: Vec<f64> = match axis {
        BudgetAxis::Iteration => {
            let longest = runs.iter().map(|r| r.best_so_far.len()).max().unwrap_or(0);
            (1..=longest).map(|b| b as f64).collect()
        }
        BudgetAxis::Runtime => (1..=RUNTIME_POINTS).map(|k| k as f64 / RUNTIME_POINTS as f64).collect(),
    };
    let mut dataset_ranks = Vec::with_capacity(grid.datasets.len());
    for rows in &grid.cells {
        let mut sums = vec![vec![0.0; budget.len()]; n_alg];
        for (_, row) in rows {
            let total = row.iter().map(|r| r.cumulative_cost.last().copied().unwrap_or(0.0)).fold(0.0, f64::max);
            for (pi, &b) in budget.iter().enumerate() {
                let neg: Vec<f64> = row
                    .iter()
                    .map(|r| match axis {
                        BudgetAxis::Iteration => -r.best_at_iteration(b as usize),
                        BudgetAxis::Runtime if total > 0.0 => -r.best_within(b * total),
                        BudgetAxis::Runtime => -r.final_best(),
                    })
                    .collect();
                for (a, rank) in average_ranks(&neg).into_iter().enumerate() {
                    sums[a][pi] += rank;
                }
            }
        }
        let k = rows.len() as f64;
        dataset_ranks.push(sums.into_iter().map(|s| s.into_iter().map(|v| v / k).collect()).collect::<Vec<Vec<f64>>>());
    }
    let mean_rank = mean_over_datasets(&dataset_ranks, &(0..dataset_ranks.len()).collect::<Vec<_>>());
    Ok(RankPath { axis, algorithms: grid.algorithms, datasets: grid.datasets, budget, dataset_ranks, mean_rank })
}

fn mean_over_datasets(dataset_ranks: &[Vec<Vec<f64>>], pick: &[usize]) -> Vec<Vec<f64>> {
    let n_alg = dataset_ranks[0].len();
    let n_pts = dataset_ranks[0][0].len();
    let mut out = vec![vec![0.0; n_pts]; n_alg];
    for &d in pick {
        for a in 0..n_alg {
            for p in 0..n_pts {
                out[a][p] += dataset_ranks[d][a][p];
            }
        }
    }
    out.iter_mut().flatten().for_each(|v| *v /= pick.len() as f64);
    out
}

/// Percentile band `(lo, hi)` per algorithm and budget point from
/// resampling datasets with replacement.
pub fn bootstrap_rank_ci<R: Rng + ?Sized>(path: &RankPath, n_boot: usize, level: f64, rng: &mut R) -> Result<Vec<Vec<(f64, f64)>>, RankError> {
    let d = path.dataset_ranks.len();
    if d < 2 {
        return Err(RankError::TooFewDatasets(d));
    }
    let boots: Vec<Vec<Vec<f64>>> = (0..n_boot)
        .map(|_| {
            let pick: Vec<usize> = (0..d).map(|_| rng.random_range(0..d)).collect();
            mean_over_datasets(&path.dataset_ranks, &pick)
        })
        .collect();
    let tail = (1.0 - level) / 2.0;
    Ok((0..path.algorithms.len())
        .map(|a| {
            (0..path.budget.len())
                .map(|p| {
                    let v: Vec<f64> = boots.iter().map(|b| b[a][p]).collect();
                    (percentile(&v, tail), percentile(&v, 1.0 - tail))
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PValueMatrix {
    pub algorithms: Vec<String>,
    pub raw: Vec<Vec<f64>>,
    /// Benjamini-Hochberg adjusted over all pairs.
    pub adjusted: Vec<Vec<f64>>,
    pub significant: Vec<Vec<bool>>,
}

/// Pairwise two-sided Wilcoxon signed-rank tests on final performances
/// `finals[algorithm][unit]`, BH-adjusted at level `q`. The diagonal is 1.
pub fn wilcoxon_bh(algorithms: &[String], finals: &[Vec<f64>], q: f64) -> Result<PValueMatrix, RankError> {
    let a = algorithms.len();
    let units = finals.first().map_or(0, Vec::len);
    if units < MIN_WILCOXON_PAIRS {
        return Err(RankError::TooFewPairs(units));
    }
    let mut pairs = Vec::new();
    let mut raw_p = Vec::new();
    for i in 0..a {
        for j in i + 1..a {
            // Runs that never succeeded compare as equal failures.
            let clean = |v: &[f64]| v.iter().map(|x| if x.is_finite() { *x } else { f64::MIN }).collect::<Vec<_>>();
            raw_p.push(wilcoxon_signed_rank(&clean(&finals[i]), &clean(&finals[j]))?.p_value);
            pairs.push((i, j));
        }
    }
    let bh = benjamini_hochberg(&raw_p, q);
    let mut raw = vec![vec![1.0; a]; a];
    let mut adjusted = vec![vec![1.0; a]; a];
    let mut significant = vec![vec![false; a]; a];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        raw[i][j] = raw_p[k];
        raw[j][i] = raw_p[k];
        adjusted[i][j] = bh.adjusted[k];
        adjusted[j][i] = bh.adjusted[k];
        significant[i][j] = bh.rejected[k];
        significant[j][i] = bh.rejected[k];
    }
    Ok(PValueMatrix { algorithms: algorithms.to_vec(), raw, adjusted, significant })
}
