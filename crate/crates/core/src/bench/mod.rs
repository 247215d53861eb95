//! Regression benchmark harness: datasets, normalization, splits, metrics,
//! training driver, and the split-repeat, active-learning and
//! variance-correlation protocols.

mod active;
mod metrics;
mod regression;
mod train;
mod varcorr;

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::Batch;
use crate::rng::stream;
#[allow(unused_imports)]
use num_traits::Float;

pub use active::{active_learning_run, Acquisition, ActiveConfig, ActiveOutcome};
pub use metrics::{
    ece, log_mean_exp, pearson, predict_samples, predictive_variance, predictive_variances, rmse, sample_means,
    test_log_likelihood, Summary,
};
pub use regression::{regression_protocol, run_split, RegressionReport, SplitOutcome};
pub use train::{train, StepRecord, TauMode, TrainConfig, TrainedModel, MAX_FULL_WEIGHTS};
pub use varcorr::{
    hmc_predictive_variances, mlp_log_joint, variance_correlation_run, variance_correlation_trial, VarcorrConfig,
    VarcorrMethod, VarcorrOutcome, VarcorrTrial,
};

/// Regression data: one feature row per example and a scalar target.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyData);
        }
        if features.len() != targets.len() {
            return Err(Error::Shape { context: "dataset targets", expected: features.len(), found: targets.len() });
        }
        let d = features[0].len();
        for row in &features {
            if row.len() != d {
                return Err(Error::Shape { context: "dataset row", expected: d, found: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("dataset", "nonfinite feature value"));
            }
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset", "nonfinite target value"));
        }
        Ok(Self { features, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features[0].len()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

/// Per-column standardization fitted on a training subset.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Normalizer {
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

impl Normalizer {
    /// Population mean and standard deviation over `train`; constant columns
    /// get standard deviation 1.
    pub fn fit(data: &Dataset, train: &[usize]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyData);
        }
        let d = data.num_features();
        let (feature_means, feature_stds) =
            (0..d).map(|j| mean_std(train.iter().map(|&i| data.features[i][j]))).unzip();
        let (target_mean, target_std) = mean_std(train.iter().map(|&i| data.targets[i]));
        Ok(Self { feature_means, feature_stds, target_mean, target_std })
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.feature_means).zip(&self.feature_stds).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn denormalize_target(&self, y: f64) -> f64 {
        y * self.target_std + self.target_mean
    }

    pub fn denormalize_variance(&self, v: f64) -> f64 {
        v * self.target_std * self.target_std
    }

    /// Normalized batch of the rows at `indices`.
    pub fn batch(&self, data: &Dataset, indices: &[usize]) -> Result<Batch> {
        let xs = indices.iter().map(|&i| self.features(&data.features[i])).collect();
        let ys: Vec<f64> = indices.iter().map(|&i| self.target(data.targets[i])).collect();
        Batch::regression(xs, &ys)
    }
}

/// Repeated random train/test splitting.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.9, repeats: 20, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction", "must lie in (0, 1)"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seed for split `index`, derived from the run seed alone so that splits
/// can be processed in any order.
pub fn split_seed(seed: u64, index: usize) -> u64 {
    stream(seed, index as u64).next_u64()
}

/// One split; the training set holds `round(n · fraction)` rows, clamped so
/// that both sides are nonempty.
pub fn make_split(n: usize, train_fraction: f64, seed: u64) -> Result<Split> {
    if n < 2 {
        return Err(Error::invalid("dataset", "need at least two rows to split"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, 0));
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let test = idx.split_off(n_train);
    Ok(Split { train: idx, test })
}

pub fn make_splits(n: usize, spec: &SplitSpec) -> Result<Vec<Split>> {
    spec.validate()?;
    (0..spec.repeats).map(|r| make_split(n, spec.train_fraction, split_seed(spec.seed, r))).collect()
}

/// `y = sin(3x)·(1 + x²)/4 + 0.1ε` on `x ~ U(−2, 2)`, a smooth 1-d task with
/// input-dependent curvature.
pub fn synthetic_1d<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Dataset {
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-2.0..2.0);
        let e: f64 = rng.sample(StandardNormal);
        xs.push(alloc::vec![x]);
        ys.push((3.0 * x).sin() * (1.0 + x * x) / 4.0 + 0.1 * e);
    }
    Dataset { features: xs, targets: ys }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let spec = SplitSpec { train_fraction: 0.9, repeats: 5, seed: 3 };
        let splits = make_splits(57, &spec).unwrap();
        for s in &splits {
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort();
            assert_eq!(all, (0..57).collect::<Vec<_>>());
            assert_eq!(s.train.len(), 51);
        }
        assert_ne!(splits[0], splits[1]);
        assert_eq!(splits, make_splits(57, &spec).unwrap());
    }

    #[test]
    fn standard_data_is_unchanged() {
        let d = Dataset::new(vec![vec![-1.0], vec![1.0]], vec![1.0, -1.0]).unwrap();
        let n = Normalizer::fit(&d, &[0, 1]).unwrap();
        assert_eq!(n.features(&[0.7]), vec![0.7]);
        assert!((n.target(0.3) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn target_round_trip_and_constant_columns() {
        let d = Dataset::new(vec![vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 6.0]], vec![10.0, 20.0, 33.0]).unwrap();
        let n = Normalizer::fit(&d, &[0, 1, 2]).unwrap();
        assert_eq!(n.feature_stds[0], 1.0);
        for y in [10.0, -4.5, 1e3] {
            assert!((n.denormalize_target(n.target(y)) - y).abs() < 1e-12);
        }
        assert!((n.denormalize_variance(1.0) - n.target_std * n.target_std).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(Dataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0]).is_err());
        assert!(Dataset::new(vec![vec![f64::NAN]], vec![0.0]).is_err());
        assert!(Dataset::new(vec![], vec![]).is_err());
    }

    #[test]
    fn synthetic_is_reproducible() {
        assert_eq!(synthetic_1d(10, &mut seeded(1)), synthetic_1d(10, &mut seeded(1)));
    }
}
