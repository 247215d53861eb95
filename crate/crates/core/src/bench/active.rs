use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{predict_samples, predictive_variances, rmse, sample_means, train, Dataset, Normalizer, TrainConfig};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Acquisition {
    /// Highest epistemic predictive variance.
    Variance,
    /// Uniformly random pool point (control).
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActiveConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Acquisitions; there is one more evaluation than acquisitions.
    pub rounds: usize,
    pub acquisition: Acquisition,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self { n_train: 20, n_test: 100, rounds: 9, acquisition: Acquisition::Variance }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActiveOutcome {
    /// Raw-scale test RMSE after each (re)training, `rounds + 1` entries.
    pub rmse: Vec<f64>,
    /// Dataset rows acquired, in order.
    pub acquired: Vec<usize>,
    pub initial_train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Pool-based active learning. Rows are shuffled with stream 0 of `seed`;
/// round `r` trains, evaluates and acquires with stream `r + 1`.
pub fn active_learning_run(data: &Dataset, cfg: &TrainConfig, acfg: &ActiveConfig, seed: u64) -> Result<ActiveOutcome> {
    if acfg.n_train == 0 || acfg.n_test == 0 {
        return Err(Error::invalid("active sizes", "train and test sets must be nonempty"));
    }
    if data.len() < acfg.n_train + acfg.n_test {
        return Err(Error::invalid("dataset", "fewer rows than the initial train and test sets need"));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut stream(seed, 0));
    let mut train_idx = idx[..acfg.n_train].to_vec();
    let test = idx[acfg.n_train..acfg.n_train + acfg.n_test].to_vec();
    let mut pool = idx[acfg.n_train + acfg.n_test..].to_vec();
    let initial_train = train_idx.clone();
    let test_y: Vec<f64> = test.iter().map(|&i| data.targets[i]).collect();

    let mut out = Vec::with_capacity(acfg.rounds + 1);
    let mut acquired = Vec::with_capacity(acfg.rounds);
    for r in 0..=acfg.rounds {
        let mut rng = stream(seed, r as u64 + 1);
        let norm = Normalizer::fit(data, &train_idx)?;
        let model = train(cfg, &norm.batch(data, &train_idx)?, &mut rng, &mut |_| {})?;
        let post = model.posterior();
        let test_x: Vec<Vec<f64>> = test.iter().map(|&i| norm.features(&data.features[i])).collect();
        let s = predict_samples(&model.arch, &post, &test_x, cfg.eval_samples, &mut rng)?;
        let means: Vec<f64> = sample_means(&s).into_iter().map(|m| norm.denormalize_target(m)).collect();
        out.push(rmse(&means, &test_y)?);
        if r == acfg.rounds {
            break;
        }
        if pool.is_empty() {
            return Err(Error::PoolExhausted);
        }
        let pick = match acfg.acquisition {
            Acquisition::Random => rng.random_range(0..pool.len()),
            Acquisition::Variance => {
                let pool_x: Vec<Vec<f64>> = pool.iter().map(|&i| norm.features(&data.features[i])).collect();
                let s = predict_samples(&model.arch, &post, &pool_x, cfg.eval_samples.max(2), &mut rng)?;
                argmax(&predictive_variances(&s)?)
            }
        };
        let row = pool.remove(pick);
        acquired.push(row);
        train_idx.push(row);
    }
    Ok(ActiveOutcome { rmse: out, acquired, initial_train, test })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
