use alloc::vec::Vec;

use super::{
    make_split, predict_samples, rmse, sample_means, split_seed, test_log_likelihood, train, Dataset, Normalizer,
    SplitSpec, StepRecord, Summary, TrainConfig, TrainedModel,
};
use crate::error::Result;
use crate::rng::stream;

/// Result of training and evaluating on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitOutcome {
    pub index: usize,
    pub seed: u64,
    /// Raw-scale RMSE of the predictive mean.
    pub rmse: f64,
    /// Raw-scale predictive-mixture test log likelihood per point.
    pub loglik: f64,
    /// Plug-in noise precision on the normalized scale.
    pub tau: f64,
    pub steps: u64,
    pub skipped: u64,
    pub model: TrainedModel,
    pub normalizer: Normalizer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionReport {
    pub splits: Vec<SplitOutcome>,
    pub rmse: Summary,
    pub loglik: Summary,
}

impl RegressionReport {
    /// Aggregate outcomes in split order, whatever order they arrive in.
    pub fn from_outcomes(mut splits: Vec<SplitOutcome>) -> Result<Self> {
        splits.sort_by_key(|s| s.index);
        let r: Vec<f64> = splits.iter().map(|s| s.rmse).collect();
        let l: Vec<f64> = splits.iter().map(|s| s.loglik).collect();
        Ok(Self { rmse: Summary::of(&r)?, loglik: Summary::of(&l)?, splits })
    }
}

/// Split `index` of the protocol: split with stream 0 of its seed, train
/// with stream 1, evaluate with stream 2.
pub fn run_split(
    data: &Dataset,
    cfg: &TrainConfig,
    spec: &SplitSpec,
    index: usize,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<SplitOutcome> {
    spec.validate()?;
    let seed = split_seed(spec.seed, index);
    let split = make_split(data.len(), spec.train_fraction, seed)?;
    let norm = Normalizer::fit(data, &split.train)?;
    let train_batch = norm.batch(data, &split.train)?;
    let model = train(cfg, &train_batch, &mut stream(seed, 1), observer)?;

    let test_x: Vec<Vec<f64>> = split.test.iter().map(|&i| norm.features(&data.features[i])).collect();
    let test_y: Vec<f64> = split.test.iter().map(|&i| data.targets[i]).collect();
    let test_y_norm: Vec<f64> = test_y.iter().map(|&y| norm.target(y)).collect();
    let samples = predict_samples(&model.arch, &model.posterior(), &test_x, cfg.eval_samples, &mut stream(seed, 2))?;
    let means: Vec<f64> = sample_means(&samples).into_iter().map(|m| norm.denormalize_target(m)).collect();
    let tau = model.tau();
    Ok(SplitOutcome {
        index,
        seed,
        rmse: rmse(&means, &test_y)?,
        loglik: test_log_likelihood(&samples, &test_y_norm, tau, norm.target_std)?,
        tau,
        steps: model.optimizer.steps(),
        skipped: model.optimizer.skipped_steps(),
        model,
        normalizer: norm,
    })
}

/// Every split of `spec` in order.
pub fn regression_protocol(
    data: &Dataset,
    cfg: &TrainConfig,
    spec: &SplitSpec,
    observer: &mut dyn FnMut(usize, &StepRecord),
) -> Result<RegressionReport> {
    let outcomes = (0..spec.repeats)
        .map(|i| run_split(data, cfg, spec, i, &mut |r| observer(i, r)))
        .collect::<Result<Vec<_>>>()?;
    RegressionReport::from_outcomes(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::synthetic_1d;
    use crate::rng::seeded;
    use alloc::vec;

    fn small_cfg() -> TrainConfig {
        TrainConfig { hidden: vec![8], epochs: 30, eval_samples: 30, beta_tilde: 0.01, ..TrainConfig::default() }
    }

    #[test]
    fn metrics_invariant_to_affine_rescaling() {
        let data = synthetic_1d(60, &mut seeded(0));
        let mut scaled = data.clone();
        for y in &mut scaled.targets {
            *y = 7.0 * *y + 100.0;
        }
        for row in &mut scaled.features {
            row[0] = 3.0 * row[0] + 2.0;
        }
        let spec = SplitSpec { repeats: 1, ..SplitSpec::default() };
        let cfg = small_cfg();
        let a = run_split(&data, &cfg, &spec, 0, &mut |_| {}).unwrap();
        let b = run_split(&scaled, &cfg, &spec, 0, &mut |_| {}).unwrap();
        assert!((b.rmse - 7.0 * a.rmse).abs() < 1e-8 * b.rmse);
        assert!((b.loglik - (a.loglik - 7.0f64.ln())).abs() < 1e-8);
    }

    #[test]
    fn protocol_is_deterministic_and_ordered() {
        let data = synthetic_1d(40, &mut seeded(1));
        let spec = SplitSpec { repeats: 3, seed: 9, ..SplitSpec::default() };
        let cfg = TrainConfig { epochs: 5, ..small_cfg() };
        let a = regression_protocol(&data, &cfg, &spec, &mut |_, _| {}).unwrap();
        let b = regression_protocol(&data, &cfg, &spec, &mut |_, _| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.splits.iter().map(|s| s.index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(a.rmse.se.is_some());
        let mut rev = a.splits.clone();
        rev.reverse();
        assert_eq!(RegressionReport::from_outcomes(rev).unwrap(), a);
    }
}
