//! Noisy natural-gradient fits of Bayesian linear regression against the
//! closed-form posterior.

use nng_core::linalg::{norm2, standard_normal_vec, Matrix, SpdMatrix};
use nng_core::model::{Activation, Batch, FisherMode, MlpArchitecture, WeightSet};
use nng_core::optim::{NoisyFullState, Optimizer, StepConfig, StepSize};
use nng_core::oracle::{blr_posterior, BlrPosterior};
use nng_core::posterior::{elbo_estimate, Family, FullPosterior, Hyper, NoiseModel, Posterior};
use nng_core::rng::{seeded, stream};
use rand::Rng;
use rand_distr::StandardNormal;

const TAU: f64 = 25.0;
const ETA: f64 = 1.0;

struct Problem {
    arch: MlpArchitecture,
    batch: Batch,
    exact: BlrPosterior,
}

fn problem(seed: u64) -> Problem {
    let (n, d) = (100, 5);
    let mut rng = seeded(seed);
    let w_true = standard_normal_vec(d + 1, &mut rng);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| standard_normal_vec(d, &mut rng)).collect();
    let design = Matrix::from_fn(n, d + 1, |i, j| if j < d { xs[i][j] } else { 1.0 });
    let ys: Vec<f64> =
        design.mul_vec(&w_true).iter().map(|m| m + rng.sample::<f64, _>(StandardNormal) / TAU.sqrt()).collect();
    Problem {
        arch: MlpArchitecture::regression(d, &[], Activation::Relu).unwrap(),
        batch: Batch::regression(xs, &ys).unwrap(),
        exact: blr_posterior(&design, &ys, ETA, TAU).unwrap(),
    }
}

fn hyper(p: &Problem) -> Hyper {
    Hyper::new(1.0, p.batch.len(), ETA, 0.0).unwrap()
}

fn fit(p: &Problem, family: Family, beta_tilde: f64, phases: &[(f64, usize)], seed: u64) -> Posterior {
    let mut config = StepConfig::new(phases[0].0, beta_tilde).unwrap();
    config.fisher = FisherMode::True;
    let mut opt = Optimizer::new(family, &WeightSet::zeros(&p.arch), hyper(p), config, 0.9, 1, 1).unwrap();
    let mut rng = seeded(seed);
    for &(alpha, steps) in phases {
        opt.config_mut().step_size = StepSize::Fixed(alpha);
        for _ in 0..steps {
            opt.step(&p.arch, &p.batch, Some(TAU), &mut rng).unwrap();
        }
    }
    opt.posterior()
}

fn mean_rel_error(post: &Posterior, exact: &BlrPosterior) -> f64 {
    let mean = post.mean_weights().flatten();
    let diff: Vec<f64> = mean.iter().zip(&exact.mean).map(|(a, b)| a - b).collect();
    norm2(&diff) / norm2(&exact.mean)
}

const SHORT: &[(f64, usize)] = &[(0.1, 300), (0.01, 1000), (0.001, 3000)];

#[test]
fn full_covariance_converges_to_exact_posterior() {
    let p = problem(11);
    let post = fit(&p, Family::Full, 2e-4, &[(0.1, 300), (0.01, 1000), (0.001, 4000), (0.0001, 40_000)], 1);
    assert!(mean_rel_error(&post, &p.exact) < 1e-3, "mean error {}", mean_rel_error(&post, &p.exact));
    let Posterior::Full(full) = &post else { panic!("wrong family") };
    let cov = full.covariance().unwrap();
    let exact = p.exact.covariance.matrix();
    let rel = cov.sub(exact).frobenius_norm() / exact.frobenius_norm();
    assert!(rel < 1e-2, "covariance error {rel}");
}

#[test]
fn kfac_single_layer_matches_posterior_mean() {
    let p = problem(12);
    let post = fit(&p, Family::Mvg, 0.001, SHORT, 2);
    assert!(mean_rel_error(&post, &p.exact) < 1e-2, "mean error {}", mean_rel_error(&post, &p.exact));
}

#[test]
fn noisy_adam_matches_posterior_mean() {
    let p = problem(13);
    let post = fit(&p, Family::Ffg, 0.001, SHORT, 3);
    assert!(mean_rel_error(&post, &p.exact) < 1e-2, "mean error {}", mean_rel_error(&post, &p.exact));
}

/// Full posterior whose precision is exactly the conjugate one.
fn exact_full(p: &Problem) -> FullPosterior {
    let h = hyper(p);
    let mut post = FullPosterior::new(&WeightSet::zeros(&p.arch), h);
    post.mu = p.exact.mean.clone();
    let mut fbar = p.exact.precision.matrix().clone();
    fbar.add_diagonal(-1.0 / ETA);
    post.fbar = SpdMatrix::new(fbar.scale(h.noise_scale())).unwrap();
    post
}

#[test]
fn exact_posterior_is_a_fixed_point_of_the_mean_update() {
    let p = problem(14);
    let mut config = StepConfig::new(1.0, 1e-15).unwrap();
    config.warm_start = false;
    let base = NoisyFullState::new(exact_full(&p), config).unwrap();
    let mut rng = stream(14, 1);
    let draws = 4000;
    let dim = p.exact.mean.len();
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for _ in 0..draws {
        let mut s = base.clone();
        s.step(&p.arch, &p.batch, Some(TAU), &mut rng).unwrap();
        for (i, (a, b)) in s.posterior.mu.iter().zip(&base.posterior.mu).enumerate() {
            sum[i] += a - b;
            sum_sq[i] += (a - b) * (a - b);
        }
    }
    let n = draws as f64;
    for i in 0..dim {
        let mean = sum[i] / n;
        let se = ((sum_sq[i] / n - mean * mean) / (n - 1.0)).sqrt();
        assert!(mean.abs() < 4.0 * se, "coordinate {i}: mean update {mean}, se {se}");
    }
}

fn elbo_draws(p: &Problem, post: &FullPosterior, draws: usize, seed: u64) -> (f64, f64) {
    let post = Posterior::Full(post.clone());
    let mut rng = seeded(seed);
    let noise = NoiseModel::Fixed(TAU);
    let vals: Vec<f64> =
        (0..draws).map(|_| elbo_estimate(&p.arch, &post, &noise, &p.batch, 1, &mut rng).unwrap()).collect();
    let n = draws as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn elbo_at_exact_posterior_equals_log_evidence() {
    let p = problem(15);
    let exact = exact_full(&p);
    let (elbo, se) = elbo_draws(&p, &exact, 2000, 5);
    assert!((elbo - p.exact.log_evidence).abs() < 4.0 * se, "elbo {elbo} ± {se}, evidence {}", p.exact.log_evidence);

    let mut shifted = exact.clone();
    shifted.mu.iter_mut().for_each(|m| *m += 0.05);
    let (elbo_shifted, se_shifted) = elbo_draws(&p, &shifted, 2000, 6);
    assert!(elbo_shifted + 4.0 * se_shifted < p.exact.log_evidence);
}
