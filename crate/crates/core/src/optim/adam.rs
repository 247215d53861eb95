use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{FisherRep, StepConfig, StepReport};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::model::{batch_gradients, Batch, MlpArchitecture};
use crate::posterior::FfgPosterior;
#[allow(unused_imports)]
use num_traits::Float;

/// Noisy Adam: Adam with momentum, a diagonal Fisher EMA without square
/// root, and adaptive weight noise. `β₂ = 1 − β̃`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoisyAdamState {
    pub posterior: FfgPosterior,
    pub m: Vec<f64>,
    pub k: u64,
    pub beta1: f64,
    pub config: StepConfig,
    /// Sample weights from the posterior; off gives a deterministic variant
    /// evaluated at the mean.
    pub weight_noise: bool,
    pub skipped: u64,
}

impl NoisyAdamState {
    pub fn new(posterior: FfgPosterior, config: StepConfig, beta1: f64) -> Result<Self> {
        config.validate()?;
        if !(0.0..1.0).contains(&beta1) {
            return Err(Error::invalid("beta1", "must lie in [0, 1)"));
        }
        if config.beta_tilde >= 1.0 {
            return Err(Error::invalid("beta_tilde", "noisy Adam needs beta2 = 1 - beta_tilde > 0"));
        }
        let m = vec![0.0; posterior.num_weights()];
        Ok(Self { posterior, m, k: 0, beta1, config, weight_noise: true, skipped: 0 })
    }

    pub fn beta2(&self) -> f64 {
        1.0 - self.config.beta_tilde
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        arch: &MlpArchitecture,
        batch: &Batch,
        tau: Option<f64>,
        rng: &mut R,
    ) -> Result<StepReport> {
        let w = if self.weight_noise { self.posterior.sample_flat(rng) } else { self.posterior.mu.clone() };
        let ws = crate::model::WeightSet::from_flat(&self.posterior.shapes, &w)?;
        let bg = batch_gradients(arch, &ws, batch, tau, self.config.fisher, rng)?;
        if !bg.is_finite() {
            self.skipped += 1;
            return Ok(StepReport::skipped(self.k));
        }
        self.k += 1;
        let grad = bg.mean_dw_flat();
        let sq = bg.mean_sq_flat();
        let g_in = self.posterior.hyper.gamma_in();
        let gamma = self.posterior.hyper.gamma();
        let (b1, b2) = (self.beta1, self.beta2());
        let correction = 1.0 - b1.powi(self.k.min(i32::MAX as u64) as i32);
        // A warm start replaces the zero initial f with the first statistics.
        let b2 = if self.k == 1 && self.config.warm_start { 0.0 } else { b2 };
        let mut m_hat = Vec::with_capacity(grad.len());
        for i in 0..grad.len() {
            let v = grad[i] - g_in * w[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * v;
            self.posterior.fbar[i] = b2 * self.posterior.fbar[i] + (1.0 - b2) * sq[i];
            m_hat.push(self.m[i] / correction / (self.posterior.fbar[i] + gamma));
        }
        let fbar = &self.posterior.fbar;
        let alpha =
            self.config.step_size.resolve(&m_hat, || FisherRep::Diagonal(fbar.iter().map(|f| f + gamma).collect()))?;
        for (mu, d) in self.posterior.mu.iter_mut().zip(&m_hat) {
            *mu += alpha * d;
        }
        Ok(StepReport {
            step: self.k,
            step_size: alpha,
            grad_norm: norm2(&grad),
            log_likelihood: bg.mean_log_likelihood,
            skipped: false,
        })
    }
}
