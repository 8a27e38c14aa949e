use cqhpo_core::{Configuration, ParamSpace, ParamSpec, ParamValue};
use cqhpo_harness::screens::{screen_asymmetry, screen_heteroskedasticity, screen_size, ScreenError};
use cqhpo_harness::stats::percentile;
use cqhpo_harness::tabular::{TableEntry, TabularBenchmark};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// One continuous parameter on an `n`-point grid over [0, 1].
fn grid_bench(n: usize, mut row: impl FnMut(f64) -> (f64, Option<f64>)) -> TabularBenchmark {
    let space = ParamSpace::new(vec![ParamSpec::continuous("x", 0.0, 1.0)]).unwrap();
    let mut b = TabularBenchmark::new("grid", space);
    for i in 0..n {
        let x = i as f64 / (n - 1) as f64;
        let (performance, runtime_seconds) = row(x);
        b.insert(Configuration::new(vec![ParamValue::Float(x)]), TableEntry { performance, runtime_seconds }).unwrap();
    }
    b
}

fn median(v: &[f64]) -> f64 {
    percentile(v, 0.5)
}

#[test]
fn size_screen() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let constant = grid_bench(100, |_| (0.0, Some(3.0)));
    assert_eq!(screen_size(&constant, 10_000, &mut rng).unwrap(), 3.0);

    let mut flip = ChaCha8Rng::seed_from_u64(1);
    let two = grid_bench(5000, |_| (0.0, Some(if flip.random::<bool>() { 1.0 } else { 3.0 })));
    let m = screen_size(&two, 1000, &mut rng).unwrap();
    // Standard deviation of a mean of 1000 draws of {1, 3}.
    assert!((m - 2.0).abs() <= 3.0 / 1000f64.sqrt(), "{m}");

    let none = grid_bench(10, |_| (0.0, None));
    assert!(matches!(screen_size(&none, 10, &mut rng), Err(ScreenError::MissingRuntime(_))));
}

#[test]
fn heteroskedasticity_screen_separates_null_and_alternative() {
    let mut null = Vec::new();
    let mut alt = Vec::new();
    for seed in 0..5 {
        let mut noise = ChaCha8Rng::seed_from_u64(seed);
        let mut n = || -> f64 { StandardNormal.sample(&mut noise) };
        let homo = grid_bench(1500, |x| ((6.0 * x).sin() + 0.3 * n(), None));
        let hetero = grid_bench(1500, |x| ((6.0 * x).sin() + 0.6 * x.sqrt() * n(), None));
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        null.push(screen_heteroskedasticity(&homo, 1500, &mut rng).unwrap());
        alt.push(screen_heteroskedasticity(&hetero, 1500, &mut rng).unwrap());
    }
    assert!(null.iter().chain(&alt).all(|r| *r <= 1.0));
    assert!(median(&null) < 0.05, "{null:?}");
    assert!(median(&alt) > 0.1, "{alt:?}");
}

#[test]
fn asymmetry_screen_separates_null_and_alternative() {
    let mut null = Vec::new();
    let mut alt = Vec::new();
    for seed in 0..5 {
        let mut noise = ChaCha8Rng::seed_from_u64(seed);
        let sym = grid_bench(2000, |x| {
            let e: f64 = StandardNormal.sample(&mut noise);
            (x + e, None)
        });
        let skewed = grid_bench(2000, |x| {
            let e: f64 = Exp1.sample(&mut noise);
            (x + e, None)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(7 + seed);
        null.push(screen_asymmetry(&sym, 2000, 50, &mut rng).unwrap());
        alt.push(screen_asymmetry(&skewed, 2000, 50, &mut rng).unwrap());
    }
    assert!(null.iter().chain(&alt).all(|s| (0.0..=1.0).contains(s)));
    // Sampling noise of a 50-point Bowley skew keeps the null well above 0.
    assert!(median(&null) < 0.2, "{null:?}");
    assert!(median(&alt) > 0.2, "{alt:?}");
    assert!(matches!(screen_asymmetry(&grid_bench(20, |_| (0.0, None)), 20, 5, &mut ChaCha8Rng::seed_from_u64(0)), Err(ScreenError::Neighbors(5))));
}
