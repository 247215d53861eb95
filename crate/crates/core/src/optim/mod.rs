//! Noisy natural-gradient optimizers: noisy Adam (factorized), noisy K-FAC
//! (matrix-variate) and the dense full-covariance update, plus trust-region
//! step sizing and the noise-precision update.
//!
//! All three treat `Dw` as the minibatch mean of per-example log-likelihood
//! gradients, and average per-example curvature statistics over the batch.

mod adam;
mod full;
mod kfac;
mod tau;

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{kron_quadratic_form, KroneckerPair, Matrix, SpdMatrix};
use crate::model::{Batch, FisherMode, MlpArchitecture, WeightSet};
use crate::posterior::{Family, FfgPosterior, FullPosterior, Hyper, MvgPosterior, Posterior};
#[allow(unused_imports)]
use num_traits::Float;

pub use adam::NoisyAdamState;
pub use full::NoisyFullState;
pub use kfac::NoisyKfacState;
pub use tau::{gamma_fisher, gamma_tau_gradient, gamma_tau_step};

/// Outcome of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Step counter after the step.
    pub step: u64,
    /// Step size actually applied to the mean.
    pub step_size: f64,
    /// Euclidean norm of the minibatch log-likelihood gradient.
    pub grad_norm: f64,
    /// Mean minibatch log likelihood at the sampled weights.
    pub log_likelihood: f64,
    /// The gradient was not finite and the step was skipped.
    pub skipped: bool,
}

impl StepReport {
    pub(crate) fn skipped(step: u64) -> Self {
        Self { step, step_size: 0.0, grad_norm: f64::NAN, log_likelihood: f64::NAN, skipped: true }
    }
}

/// Decaying KL budget `c_k = c₀ ζᵏ`, advanced once per epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrustRegionSchedule {
    pub c0: f64,
    pub zeta: f64,
    pub alpha_max: f64,
    pub epoch: u32,
}

impl TrustRegionSchedule {
    pub fn new(c0: f64, zeta: f64, alpha_max: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::invalid("c0", "must be positive"));
        }
        if !(zeta > 0.0 && zeta <= 1.0) {
            return Err(Error::invalid("zeta", "must lie in (0, 1]"));
        }
        if !(alpha_max > 0.0 && alpha_max.is_finite()) {
            return Err(Error::invalid("alpha_max", "must be positive"));
        }
        Ok(Self { c0, zeta, alpha_max, epoch: 0 })
    }

    pub fn budget(&self) -> f64 {
        self.c0 * self.zeta.powi(self.epoch as i32)
    }

    pub fn advance_epoch(&mut self) {
        self.epoch += 1;
    }
}

/// Approximate Fisher used to measure an update direction.
#[derive(Clone, Debug, PartialEq)]
pub enum FisherRep {
    Diagonal(Vec<f64>),
    /// One pair per layer; layer `l` covers `right.dim × left.dim` entries of
    /// the flattened direction.
    Kronecker(Vec<KroneckerPair>),
    Dense(SpdMatrix),
}

impl FisherRep {
    /// `vᵀ F̃ v` for a flattened direction `v`.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        match self {
            FisherRep::Diagonal(f) => {
                if f.len() != v.len() {
                    return Err(Error::Shape { context: "diagonal Fisher", expected: f.len(), found: v.len() });
                }
                Ok(f.iter().zip(v).map(|(f, x)| f * x * x).sum())
            }
            FisherRep::Dense(m) => {
                if m.dim() != v.len() {
                    return Err(Error::Shape { context: "dense Fisher", expected: m.dim(), found: v.len() });
                }
                Ok(crate::linalg::dot(v, &m.matrix().mul_vec(v)))
            }
            FisherRep::Kronecker(pairs) => {
                let total: usize = pairs.iter().map(|k| k.left.dim() * k.right.dim()).sum();
                if total != v.len() {
                    return Err(Error::Shape { context: "Kronecker Fisher", expected: total, found: v.len() });
                }
                let mut offset = 0;
                let mut q = 0.0;
                for k in pairs {
                    let (r, c) = (k.right.dim(), k.left.dim());
                    let block = Matrix::from_vec_col_major(r, c, &v[offset..offset + r * c])?;
                    q += kron_quadratic_form(k, &block)?;
                    offset += r * c;
                }
                Ok(q)
            }
        }
    }
}

/// `min(α̃_max, √(c_k / vᵀF̃v))`; a degenerate direction gets `α̃_max`.
pub fn trust_region_lr(v: &[f64], fisher: &FisherRep, schedule: &TrustRegionSchedule) -> Result<f64> {
    let q = fisher.quadratic_form(v)?;
    if !(q > 0.0) || !q.is_finite() {
        return Ok(schedule.alpha_max);
    }
    Ok(schedule.alpha_max.min((schedule.budget() / q).sqrt()))
}

/// Step-size policy shared by the optimizers.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StepSize {
    Fixed(f64),
    TrustRegion(TrustRegionSchedule),
}

impl StepSize {
    /// The fixed rate, or the trust-region cap.
    pub fn nominal(&self) -> f64 {
        match self {
            StepSize::Fixed(a) => *a,
            StepSize::TrustRegion(s) => s.alpha_max,
        }
    }

    /// Multiply the rate (or cap) by `factor`.
    pub fn scale(&mut self, factor: f64) {
        match self {
            StepSize::Fixed(a) => *a *= factor,
            StepSize::TrustRegion(s) => s.alpha_max *= factor,
        }
    }

    pub fn advance_epoch(&mut self) {
        if let StepSize::TrustRegion(s) = self {
            s.advance_epoch();
        }
    }

    pub(crate) fn resolve(&self, direction: &[f64], fisher: impl FnOnce() -> FisherRep) -> Result<f64> {
        match self {
            StepSize::Fixed(a) => Ok(*a),
            StepSize::TrustRegion(s) => trust_region_lr(direction, &fisher(), s),
        }
    }
}

/// Common settings for every optimizer.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepConfig {
    pub step_size: StepSize,
    /// EMA rate β̃ of the curvature statistics.
    pub beta_tilde: f64,
    pub fisher: FisherMode,
    /// Replace the zero-initialized curvature estimate with the first
    /// minibatch statistics instead of averaging them in at rate β̃.
    #[cfg_attr(feature = "serde", serde(default = "warm_start_default"))]
    pub warm_start: bool,
}

#[cfg(feature = "serde")]
fn warm_start_default() -> bool {
    true
}

impl StepConfig {
    pub fn new(alpha_tilde: f64, beta_tilde: f64) -> Result<Self> {
        let c =
            Self { step_size: StepSize::Fixed(alpha_tilde), beta_tilde, fisher: FisherMode::True, warm_start: true };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.nominal() > 0.0 && self.step_size.nominal().is_finite()) {
            return Err(Error::invalid("step size", "must be positive"));
        }
        if !(self.beta_tilde > 0.0 && self.beta_tilde <= 1.0) {
            return Err(Error::invalid("beta_tilde", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Any of the three optimizers behind one interface.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "optimizer", rename_all = "lowercase"))]
pub enum Optimizer {
    Adam(NoisyAdamState),
    Kfac(NoisyKfacState),
    Full(NoisyFullState),
}

impl Optimizer {
    /// A fresh optimizer of `family` centred on `init`. `beta1` is used by
    /// noisy Adam only, the intervals by noisy K-FAC only.
    pub fn new(
        family: Family,
        init: &WeightSet,
        hyper: Hyper,
        config: StepConfig,
        beta1: f64,
        t_stats: u64,
        t_inv: u64,
    ) -> Result<Self> {
        Ok(match family {
            Family::Ffg => Optimizer::Adam(NoisyAdamState::new(FfgPosterior::new(init, hyper), config, beta1)?),
            Family::Mvg => {
                Optimizer::Kfac(NoisyKfacState::new(MvgPosterior::new(init, hyper)?, config, t_stats, t_inv)?)
            }
            Family::Full => Optimizer::Full(NoisyFullState::new(FullPosterior::new(init, hyper), config)?),
        })
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        arch: &MlpArchitecture,
        batch: &Batch,
        tau: Option<f64>,
        rng: &mut R,
    ) -> Result<StepReport> {
        match self {
            Optimizer::Adam(s) => s.step(arch, batch, tau, rng),
            Optimizer::Kfac(s) => s.step(arch, batch, tau, rng),
            Optimizer::Full(s) => s.step(arch, batch, tau, rng),
        }
    }

    pub fn posterior(&self) -> Posterior {
        match self {
            Optimizer::Adam(s) => Posterior::Ffg(s.posterior.clone()),
            Optimizer::Kfac(s) => Posterior::Mvg(s.posterior.clone()),
            Optimizer::Full(s) => Posterior::Full(s.posterior.clone()),
        }
    }

    /// One weight sample from the current posterior.
    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WeightSet> {
        match self {
            Optimizer::Adam(s) => Ok(s.posterior.sample_weights(rng)),
            Optimizer::Kfac(s) => s.posterior.sample_weights(rng),
            Optimizer::Full(s) => s.posterior.sample_weights(rng),
        }
    }

    pub fn hyper(&self) -> &Hyper {
        match self {
            Optimizer::Adam(s) => &s.posterior.hyper,
            Optimizer::Kfac(s) => &s.posterior.hyper,
            Optimizer::Full(s) => &s.posterior.hyper,
        }
    }

    pub fn config(&self) -> &StepConfig {
        match self {
            Optimizer::Adam(s) => &s.config,
            Optimizer::Kfac(s) => &s.config,
            Optimizer::Full(s) => &s.config,
        }
    }

    pub fn config_mut(&mut self) -> &mut StepConfig {
        match self {
            Optimizer::Adam(s) => &mut s.config,
            Optimizer::Kfac(s) => &mut s.config,
            Optimizer::Full(s) => &mut s.config,
        }
    }

    pub fn steps(&self) -> u64 {
        match self {
            Optimizer::Adam(s) => s.k,
            Optimizer::Kfac(s) => s.k,
            Optimizer::Full(s) => s.k,
        }
    }

    pub fn skipped_steps(&self) -> u64 {
        match self {
            Optimizer::Adam(s) => s.skipped,
            Optimizer::Kfac(s) => s.skipped,
            Optimizer::Full(s) => s.skipped,
        }
    }
}

pub(crate) fn flat_norm(ms: &[Matrix]) -> f64 {
    ms.iter().map(|m| m.frobenius_dot(m)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn trust_region_cases() {
        let s = TrustRegionSchedule::new(0.001, 0.95, 0.01).unwrap();
        let unit = FisherRep::Diagonal(vec![1.0]);
        // vᵀF̃v = c_k
        let v = [0.001f64.sqrt()];
        assert!((trust_region_lr(&v, &unit, &s).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(trust_region_lr(&[0.0], &unit, &s).unwrap(), 0.01);
        // vᵀF̃v = 10 → √(1e-4) = 0.01
        let v = [10f64.sqrt()];
        assert!((trust_region_lr(&v, &unit, &s).unwrap() - 0.01).abs() < 1e-15);
        let big = [100.0];
        assert!((trust_region_lr(&big, &unit, &s).unwrap() - (0.001f64 / 1e4).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn budget_decays_per_epoch() {
        let mut s = TrustRegionSchedule::new(0.01, 0.5, 1.0).unwrap();
        s.advance_epoch();
        s.advance_epoch();
        assert!((s.budget() - 0.0025).abs() < 1e-15);
        assert!(TrustRegionSchedule::new(0.01, 1.5, 1.0).is_err());
    }

    #[test]
    fn fisher_representations_agree() {
        let a = SpdMatrix::new(Matrix::new(2, 2, vec![2.0, 0.5, 0.5, 1.0]).unwrap()).unwrap();
        let s = SpdMatrix::new(Matrix::new(1, 1, vec![3.0]).unwrap()).unwrap();
        let k = KroneckerPair::new(s, a, 0.5);
        let dense = k.to_dense();
        let v = [0.3, -1.2];
        let qk = FisherRep::Kronecker(vec![k]).quadratic_form(&v).unwrap();
        let qd = FisherRep::Dense(SpdMatrix::new(dense).unwrap()).quadratic_form(&v).unwrap();
        assert!((qk - qd).abs() < 1e-14);
        assert!(FisherRep::Diagonal(vec![1.0]).quadratic_form(&v).is_err());
    }
}
