//! Constructed benchmark scenarios with known answers.

use nng_core::bench::{active_learning_run, train, Acquisition, ActiveConfig, Dataset, Normalizer, TrainConfig};
use nng_core::posterior::Family;
use nng_core::rng::{seeded, stream};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn learned_tau_recovers_raw_noise_variance() {
    let sigma = 5.0;
    // y = 3x + 200 + N(0, 5²) with x ~ N(0, 3²): target std about 10.
    let mut rng = seeded(21);
    let xs: Vec<Vec<f64>> = (0..2000).map(|_| vec![3.0 * rng.sample::<f64, _>(StandardNormal)]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x[0] + 200.0 + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let data = Dataset::new(xs, ys).unwrap();
    let rows: Vec<usize> = (0..data.len()).collect();
    let norm = Normalizer::fit(&data, &rows).unwrap();
    assert!(norm.target_std > 9.0);

    let cfg =
        TrainConfig { method: Family::Ffg, hidden: vec![], epochs: 40, eval_samples: 10, ..TrainConfig::default() };
    let model = train(&cfg, &norm.batch(&data, &rows).unwrap(), &mut seeded(22), &mut |_| {}).unwrap();
    let raw_var = norm.denormalize_variance(1.0 / model.tau());
    let rel = (raw_var / (sigma * sigma) - 1.0).abs();
    assert!(rel < 0.1, "raw noise variance {raw_var}, expected {}", sigma * sigma);
}

fn active_cfg() -> TrainConfig {
    TrainConfig {
        method: Family::Mvg,
        hidden: vec![10],
        beta_tilde: 0.01,
        epochs: 100,
        eval_samples: 100,
        ..TrainConfig::default()
    }
}

/// Rows are placed so that, after the run's own stream-0 shuffle, the
/// initial train and test sets cover x ∈ [−2, 0.5] only, while the pool also
/// holds points from x ∈ [2, 3].
fn uncovered_region_data(acfg: &ActiveConfig, pool: usize, uncovered: usize, seed: u64) -> Dataset {
    let n = acfg.n_train + acfg.n_test + pool;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, 0));
    let mut rng = stream(seed, 99);
    let mut xs = vec![vec![0.0]; n];
    let mut ys = vec![0.0; n];
    for (pos, &row) in idx.iter().enumerate() {
        let far = pos >= n - uncovered;
        let x = if far { rng.random_range(2.0..3.0) } else { rng.random_range(-2.0..0.5) };
        xs[row] = vec![x];
        ys[row] = f64::sin(2.0 * x) + 0.05 * rng.sample::<f64, _>(StandardNormal);
    }
    Dataset::new(xs, ys).unwrap()
}

#[test]
fn variance_acquisition_targets_the_uncovered_region() {
    let acfg = ActiveConfig { n_train: 20, n_test: 20, rounds: 1, acquisition: Acquisition::Variance };
    let cfg = active_cfg();
    let seeds = 20;
    let mut hits = 0;
    for seed in 0..seeds {
        let data = uncovered_region_data(&acfg, 30, 6, seed);
        let out = active_learning_run(&data, &cfg, &acfg, seed).unwrap();
        if data.features[out.acquired[0]][0] >= 2.0 {
            hits += 1;
        }
    }
    assert!(hits as f64 / seeds as f64 > 0.8, "uncovered region picked first in {hits} of {seeds} runs");
}

#[test]
fn variance_acquisition_never_repeats_a_labeled_point() {
    let acfg = ActiveConfig { n_train: 5, n_test: 10, rounds: 8, acquisition: Acquisition::Variance };
    let data = uncovered_region_data(&acfg, 10, 3, 4);
    let cfg = TrainConfig { epochs: 10, eval_samples: 10, ..active_cfg() };
    let out = active_learning_run(&data, &cfg, &acfg, 4).unwrap();
    let mut seen = out.initial_train.clone();
    for row in &out.acquired {
        assert!(!seen.contains(row) && !out.test.contains(row));
        seen.push(*row);
    }
    assert_eq!(out.acquired.len(), 8);
}
