use cqhpo_harness::metrics::{logistic_llr, rank_metrics_across_variants, MetricValue};
use cqhpo_harness::ranking::{aggregate_rank_paths, bootstrap_rank_ci, BudgetAxis, RunTrace};
use cqhpo_harness::stats::{benjamini_hochberg, bonferroni, percentile, wilcoxon_signed_rank};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn llr_under_the_null_is_rarely_significant() {
    let crit = ChiSquared::new(2.0).unwrap().inverse_cdf(0.95);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let below = (0..200)
        .filter(|_| {
            let rows: Vec<Vec<f64>> = (0..68).map(|_| vec![rng.random(), rng.random()]).collect();
            let y: Vec<f64> = (0..68).map(|_| f64::from(u8::from(rng.random::<f64>() < 0.3))).collect();
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let s = logistic_llr(&refs, &y);
            assert!(s >= 0.0);
            s < crit
        })
        .count();
    assert!(below >= 180, "{below} of 200 below the critical value");
}

#[test]
fn seven_variant_ranks_sum_to_28_per_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut vals = Vec::new();
    for d in ["a", "b", "c"] {
        for conf in [0.25, 0.5, 0.75] {
            for v in 0..7 {
                let value = if v == 3 { 0.5 } else { rng.random::<f64>().round() };
                vals.push(MetricValue { variant: format!("v{v}"), dataset: d.into(), confidence: conf, value });
            }
        }
    }
    let ranks = rank_metrics_across_variants(&vals, 500, &mut rng).unwrap();
    assert!((ranks.iter().map(|r| r.mean_rank).sum::<f64>() - 28.0).abs() < 1e-9);
    for r in &ranks {
        assert!(r.ci_lo <= r.mean_rank + 1e-12 && r.mean_rank <= r.ci_hi + 1e-12);
    }
}

fn random_runs(datasets: usize, seeds: u64, algs: usize, rng: &mut ChaCha8Rng) -> Vec<RunTrace> {
    let mut runs = Vec::new();
    for d in 0..datasets {
        for s in 0..seeds {
            for a in 0..algs {
                let mut best = f64::NEG_INFINITY;
                let mut cost = 0.0;
                let (mut b, mut c) = (Vec::new(), Vec::new());
                for _ in 0..20 {
                    // Some ties on purpose.
                    best = best.max((rng.random::<f64>() * 5.0).round());
                    cost += rng.random::<f64>();
                    b.push(best);
                    c.push(cost);
                }
                runs.push(RunTrace { algorithm: format!("alg{a}"), dataset: format!("d{d}"), seed: s, best_so_far: b, cumulative_cost: c });
            }
        }
    }
    runs
}

#[test]
fn bootstrap_band_narrows_with_more_datasets() {
    let width = |datasets: usize, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let runs = random_runs(datasets, 1, 3, &mut rng);
        let path = aggregate_rank_paths(&runs, BudgetAxis::Iteration).unwrap();
        let band = bootstrap_rank_ci(&path, 500, 0.95, &mut rng).unwrap();
        let w: Vec<f64> = band.iter().flatten().map(|(lo, hi)| hi - lo).collect();
        percentile(&w, 0.5)
    };
    let small: Vec<f64> = (0..5).map(|s| width(5, s)).collect();
    let large: Vec<f64> = (0..5).map(|s| width(50, s)).collect();
    assert!(percentile(&large, 0.5) < percentile(&small, 0.5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_paths_conserve_rank_sums(seed in any::<u64>(), algs in 2usize..5, datasets in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let runs = random_runs(datasets, 2, algs, &mut rng);
        let expect = (algs * (algs + 1)) as f64 / 2.0;
        for axis in [BudgetAxis::Iteration, BudgetAxis::Runtime] {
            let p = aggregate_rank_paths(&runs, axis).unwrap();
            for pt in 0..p.budget.len() {
                for d in &p.dataset_ranks {
                    let s: f64 = d.iter().map(|a| a[pt]).sum();
                    prop_assert!((s - expect).abs() < 1e-9);
                }
                for a in &p.mean_rank {
                    prop_assert!(a[pt] >= 1.0 - 1e-12 && a[pt] <= algs as f64 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn dataset_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let runs = random_runs(3, 2, 3, &mut rng);
        let mut reversed = runs.clone();
        reversed.reverse();
        prop_assert_eq!(aggregate_rank_paths(&runs, BudgetAxis::Iteration).unwrap(), aggregate_rank_paths(&reversed, BudgetAxis::Iteration).unwrap());
    }

    #[test]
    fn wilcoxon_is_invariant_under_increasing_affine_maps(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 6..40),
        scale in 0.1f64..10.0,
        shift in -50.0f64..50.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let map = |v: &[f64]| v.iter().map(|t| scale * t + shift).collect::<Vec<_>>();
        let a = wilcoxon_signed_rank(&x, &y).unwrap();
        let b = wilcoxon_signed_rank(&map(&x), &map(&y)).unwrap();
        prop_assert_eq!(a.n, b.n);
        prop_assert_eq!(a.w_plus, b.w_plus);
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
    }

    #[test]
    fn bh_rejects_at_least_bonferroni(p in prop::collection::vec(0.0f64..0.2, 1..30), q in 0.01f64..0.2) {
        let bh = benjamini_hochberg(&p, q).rejected.iter().filter(|r| **r).count();
        let bf = bonferroni(&p, q).rejected.iter().filter(|r| **r).count();
        prop_assert!(bh >= bf);
    }
}
