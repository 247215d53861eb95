use alloc::vec::Vec;

use rand::Rng;

use super::{FisherRep, StepConfig, StepReport};
use crate::error::Result;
use crate::linalg::{norm2, spd_solve, Matrix, SpdMatrix};
use crate::model::{batch_gradients, Batch, MlpArchitecture, WeightSet};
use crate::posterior::FullPosterior;

/// Full-covariance noisy natural gradient:
/// `F̄ ← (1−β̃)F̄ + β̃·mean(Dw Dwᵀ)`, then
/// `μ ← μ + α̃(F̄ + γI)⁻¹[Dw − γ_in w]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoisyFullState {
    pub posterior: FullPosterior,
    pub k: u64,
    pub config: StepConfig,
    pub skipped: u64,
}

impl NoisyFullState {
    pub fn new(posterior: FullPosterior, config: StepConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { posterior, k: 0, config, skipped: 0 })
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        arch: &MlpArchitecture,
        batch: &Batch,
        tau: Option<f64>,
        rng: &mut R,
    ) -> Result<StepReport> {
        let w = self.posterior.sample_flat(rng)?;
        let ws = WeightSet::from_flat(&self.posterior.shapes, &w)?;
        let bg = batch_gradients(arch, &ws, batch, tau, self.config.fisher, rng)?;
        if !bg.is_finite() {
            self.skipped += 1;
            return Ok(StepReport::skipped(self.k));
        }
        self.k += 1;
        let rate = if self.k == 1 && self.config.warm_start { 1.0 } else { self.config.beta_tilde };
        self.posterior.fbar.ema_update(rate, &bg.mean_flat_outer());
        let g_in = self.posterior.hyper.gamma_in();
        let gamma = self.posterior.hyper.gamma();
        let grad = bg.mean_dw_flat();
        let v: Vec<f64> = grad.iter().zip(&w).map(|(g, wi)| g - g_in * wi).collect();
        let damped = self.posterior.fbar.add_diagonal(gamma);
        let direction = spd_solve(&damped, &Matrix::column(&v))?.into_vec();
        let alpha = self.config.step_size.resolve(&direction, || FisherRep::Dense(damped.clone()))?;
        for (mu, d) in self.posterior.mu.iter_mut().zip(&direction) {
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

    /// Damped Fisher `F̄ + γI` used to precondition the mean update.
    pub fn damped_fisher(&self) -> SpdMatrix {
        self.posterior.fbar.add_diagonal(self.posterior.hyper.gamma())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, LikelihoodKind};
    use crate::posterior::Hyper;
    use crate::rng::seeded;
    use alloc::vec;

    #[test]
    fn fisher_stays_psd() {
        let arch = MlpArchitecture::regression(2, &[2], Activation::Tanh).unwrap();
        let hyper = Hyper::new(1.0, 30, 1.0, 0.0).unwrap();
        let p = FullPosterior::new(&WeightSet::init(&arch, &mut seeded(0)), hyper);
        let mut s = NoisyFullState::new(p, StepConfig::new(0.01, 0.3).unwrap()).unwrap();
        let batch = Batch::regression(vec![vec![0.3, -0.1], vec![1.2, 0.4]], &[0.2, -0.5]).unwrap();
        let mut rng = seeded(1);
        for _ in 0..200 {
            s.step(&arch, &batch, Some(3.0), &mut rng).unwrap();
        }
        assert!(s.posterior.fbar.min_eigenvalue() >= -1e-10);
        let m = s.posterior.fbar.matrix();
        assert_eq!(m, &m.transpose());
    }

    #[test]
    fn single_example_fisher_is_kronecker() {
        // For one example and a single-output layer, vec(a gᵀ) vec(a gᵀ)ᵀ equals
        // (g gᵀ) ⊗ (a aᵀ), so the dense and Kronecker statistics coincide.
        let arch = MlpArchitecture::new(vec![2, 1], Activation::Relu, LikelihoodKind::Gaussian).unwrap();
        let hyper = Hyper::new(1.0, 5, 1.0, 0.0).unwrap();
        let w = WeightSet::init(&arch, &mut seeded(2));
        let batch = Batch::regression(vec![vec![0.4, -1.3]], &[0.9]).unwrap();
        let mut full = NoisyFullState::new(FullPosterior::new(&w, hyper), StepConfig::new(0.01, 1.0).unwrap()).unwrap();
        full.step(&arch, &batch, Some(1.0), &mut seeded(3)).unwrap();
        let f = full.posterior.fbar.matrix().clone();
        let a = &batch.inputs[0];
        let a1 = [a[0], a[1], 1.0];
        let aat = Matrix::outer(&a1, &a1);
        let s = f[(2, 2)];
        assert!(f.max_abs_diff(&aat.scale(s)) < 1e-12);
    }
}
