use alloc::vec::Vec;

use rand::Rng;

use super::{flat_norm, FisherRep, StepConfig, StepReport};
use crate::error::{Error, Result};
use crate::linalg::{KroneckerPair, Matrix};
use crate::model::{batch_gradients, Batch, MlpArchitecture};
use crate::posterior::MvgPosterior;

/// Noisy K-FAC without momentum. Statistics are refreshed every `t_stats`
/// steps and damped inverses every `t_inv` steps.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoisyKfacState {
    pub posterior: MvgPosterior,
    pub k: u64,
    pub config: StepConfig,
    pub t_stats: u64,
    pub t_inv: u64,
    pub skipped: u64,
}

impl NoisyKfacState {
    pub fn new(posterior: MvgPosterior, config: StepConfig, t_stats: u64, t_inv: u64) -> Result<Self> {
        config.validate()?;
        if t_stats == 0 || t_inv == 0 {
            return Err(Error::invalid("update intervals", "t_stats and t_inv must be at least 1"));
        }
        Ok(Self { posterior, k: 0, config, t_stats, t_inv, skipped: 0 })
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        arch: &MlpArchitecture,
        batch: &Batch,
        tau: Option<f64>,
        rng: &mut R,
    ) -> Result<StepReport> {
        let w = self.posterior.sample_weights(rng)?;
        let bg = batch_gradients(arch, &w, batch, tau, self.config.fisher, rng)?;
        if !bg.is_finite() {
            self.skipped += 1;
            return Ok(StepReport::skipped(self.k));
        }
        self.k += 1;
        let beta = self.config.beta_tilde;
        // Averaging the first statistics in from zero would shrink the
        // Kronecker product by β̃² rather than β̃ and inflate early steps.
        // They are also inverted at once instead of waiting out t_inv steps
        // preconditioned by 1/γ alone.
        let warm = self.config.warm_start && self.k == self.t_stats;
        if self.k.is_multiple_of(self.t_stats) {
            let rate = if warm { 1.0 } else { beta };
            for (l, layer) in self.posterior.layers.iter_mut().enumerate() {
                layer.abar.ema_update(rate, &bg.mean_aat(l));
                layer.sbar.ema_update(rate, &bg.mean_ggt(l));
            }
        }
        if warm || self.k.is_multiple_of(self.t_inv) {
            self.posterior.refresh_all()?;
        }
        let g_in = self.posterior.hyper.gamma_in();
        let factors = self.posterior.step_factors()?;
        let directions: Vec<Matrix> = bg
            .mean_dw
            .iter()
            .zip(&w.layers)
            .zip(factors)
            .map(|((dw, wl), f)| {
                let mut v = dw.clone();
                v.add_scaled(wl, -g_in);
                f.precondition(&v)
            })
            .collect();
        let flat: Vec<f64> = directions.iter().flat_map(|d| d.vec()).collect();
        let alpha = self.config.step_size.resolve(&flat, || {
            FisherRep::Kronecker(
                factors.iter().map(|f| KroneckerPair::new(f.s_damped.clone(), f.a_damped.clone(), 1.0)).collect(),
            )
        })?;
        for (layer, d) in self.posterior.layers.iter_mut().zip(&directions) {
            layer.mean.add_scaled(d, alpha);
        }
        Ok(StepReport {
            step: self.k,
            step_size: alpha,
            grad_norm: flat_norm(&bg.mean_dw),
            log_likelihood: bg.mean_log_likelihood,
            skipped: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, FisherMode, WeightSet};
    use crate::posterior::Hyper;
    use crate::rng::seeded;
    use alloc::vec;

    #[test]
    fn zero_statistics_reduce_to_scaled_gradient_ascent() {
        // Statistics never update (t_stats huge), so the step is
        // α·(V)/γ with V the prior-corrected gradient at the sampled weights.
        let arch = MlpArchitecture::regression(2, &[2], Activation::Tanh).unwrap();
        let hyper = Hyper::new(1.0, 10, 1.0, 0.0).unwrap();
        let w0 = WeightSet::init(&arch, &mut seeded(1));
        let p = MvgPosterior::new(&w0, hyper).unwrap();
        let mut s = NoisyKfacState::new(p, StepConfig::new(0.05, 0.1).unwrap(), u64::MAX, u64::MAX).unwrap();
        let batch = Batch::regression(vec![vec![0.1, 0.2], vec![-0.4, 1.0]], &[0.3, 0.5]).unwrap();

        let mut rng = seeded(9);
        let w = s.posterior.sample_weights(&mut rng).unwrap();
        let bg = batch_gradients(&arch, &w, &batch, Some(2.0), FisherMode::True, &mut rng).unwrap();
        s.step(&arch, &batch, Some(2.0), &mut seeded(9)).unwrap();
        let gamma = hyper.gamma();
        for l in 0..2 {
            let mut v = bg.mean_dw[l].clone();
            v.add_scaled(&w.layers[l], -hyper.gamma_in());
            let mut expected = w0.layers[l].clone();
            expected.add_scaled(&v, 0.05 / gamma);
            assert!(s.posterior.layers[l].mean.max_abs_diff(&expected) < 1e-12);
        }
    }

    #[test]
    fn statistics_stay_psd_and_intervals_respected() {
        let arch = MlpArchitecture::regression(3, &[4], Activation::Relu).unwrap();
        let hyper = Hyper::new(1.0, 50, 1.0, 0.01).unwrap();
        let p = MvgPosterior::new(&WeightSet::init(&arch, &mut seeded(2)), hyper).unwrap();
        let mut s = NoisyKfacState::new(p, StepConfig::new(0.01, 0.2).unwrap(), 2, 3).unwrap();
        s.config.warm_start = false;
        let batch =
            Batch::regression(vec![vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 2.0], vec![0.0, -0.7, 0.4]], &[1.0, 0.0, -1.0])
                .unwrap();
        let mut rng = seeded(4);
        s.step(&arch, &batch, Some(1.0), &mut rng).unwrap();
        assert_eq!(s.posterior.layers[0].abar.trace(), 0.0);
        s.step(&arch, &batch, Some(1.0), &mut rng).unwrap();
        assert!(s.posterior.layers[0].abar.trace() > 0.0);
        // Step-2 statistics are not yet folded into the caches.
        assert_eq!(s.posterior.step_factors().unwrap()[0].pi, 1.0);
        s.step(&arch, &batch, Some(1.0), &mut rng).unwrap();
        assert_ne!(s.posterior.step_factors().unwrap()[0].pi, 1.0);
        for _ in 0..50 {
            s.step(&arch, &batch, Some(1.0), &mut rng).unwrap();
        }
        for l in &s.posterior.layers {
            assert!(l.abar.min_eigenvalue() >= -1e-10);
            assert!(l.sbar.min_eigenvalue() >= -1e-10);
        }
    }

    #[test]
    fn first_statistics_replace_zero_factors() {
        let arch = MlpArchitecture::regression(2, &[3], Activation::Tanh).unwrap();
        let hyper = Hyper::new(1.0, 20, 1.0, 0.0).unwrap();
        let p = MvgPosterior::new(&WeightSet::init(&arch, &mut seeded(5)), hyper).unwrap();
        let mut s = NoisyKfacState::new(p, StepConfig::new(0.01, 0.05).unwrap(), 1, 1).unwrap();
        let batch = Batch::regression(vec![vec![0.5, -1.0], vec![2.0, 0.1]], &[0.3, -0.8]).unwrap();

        let mut rng = seeded(6);
        let w = s.posterior.sample_weights(&mut rng).unwrap();
        let bg = batch_gradients(&arch, &w, &batch, Some(1.0), FisherMode::True, &mut rng).unwrap();
        s.step(&arch, &batch, Some(1.0), &mut seeded(6)).unwrap();
        for (l, layer) in s.posterior.layers.iter().enumerate() {
            assert!(layer.abar.matrix().max_abs_diff(&bg.mean_aat(l)) < 1e-12);
            assert!(layer.sbar.matrix().max_abs_diff(&bg.mean_ggt(l)) < 1e-12);
        }
        // Later statistics are averaged in at rate β̃.
        let before = s.posterior.layers[0].abar.matrix().clone();
        let mut rng = seeded(7);
        let w = s.posterior.sample_weights(&mut rng).unwrap();
        let bg = batch_gradients(&arch, &w, &batch, Some(1.0), FisherMode::True, &mut rng).unwrap();
        s.step(&arch, &batch, Some(1.0), &mut seeded(7)).unwrap();
        let mut expected = before.scale(0.95);
        expected.add_scaled(&bg.mean_aat(0), 0.05);
        assert!(s.posterior.layers[0].abar.matrix().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn rejects_zero_intervals() {
        let arch = MlpArchitecture::regression(1, &[1], Activation::Relu).unwrap();
        let p = MvgPosterior::new(&WeightSet::zeros(&arch), Hyper::new(1.0, 1, 1.0, 0.0).unwrap()).unwrap();
        assert!(NoisyKfacState::new(p, StepConfig::new(0.01, 0.1).unwrap(), 0, 1).is_err());
    }
}
