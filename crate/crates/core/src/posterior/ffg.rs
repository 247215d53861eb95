use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{gaussian_kl_to_spherical, Hyper};
use crate::linalg::dot;
use crate::model::WeightSet;
#[allow(unused_imports)]
use num_traits::Float;

/// Fully factorized Gaussian with covariance `(λ/N)·diag(f̄ + γ_in)⁻¹`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FfgPosterior {
    pub shapes: Vec<(usize, usize)>,
    pub mu: Vec<f64>,
    pub fbar: Vec<f64>,
    pub hyper: Hyper,
}

impl FfgPosterior {
    pub fn new(mean: &WeightSet, hyper: Hyper) -> Self {
        let mu = mean.flatten();
        let shapes = mean.layers.iter().map(|m| m.shape()).collect();
        Self { shapes, fbar: vec![0.0; mu.len()], mu, hyper }
    }

    pub fn num_weights(&self) -> usize {
        self.mu.len()
    }

    pub fn mean_weights(&self) -> WeightSet {
        WeightSet::from_flat(&self.shapes, &self.mu).expect("shapes are kept consistent with mu")
    }

    pub fn variances(&self) -> Vec<f64> {
        let c = self.hyper.noise_scale();
        let g = self.hyper.gamma_in();
        self.fbar.iter().map(|f| c / (f + g)).collect()
    }

    /// `(N/λ)(f̄ + γ_in)`
    pub fn precision(&self) -> Vec<f64> {
        let c = self.hyper.noise_scale();
        let g = self.hyper.gamma_in();
        self.fbar.iter().map(|f| (f + g) / c).collect()
    }

    pub fn sample_flat<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mu.iter().zip(self.variances()).map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightSet {
        WeightSet::from_flat(&self.shapes, &self.sample_flat(rng)).expect("shapes are kept consistent with mu")
    }

    pub fn kl_to_prior(&self) -> f64 {
        let var = self.variances();
        let log_det = var.iter().map(|v| v.ln()).sum();
        let trace = var.iter().sum();
        gaussian_kl_to_spherical(self.mu.len(), log_det, trace, dot(&self.mu, &self.mu), self.hyper.eta)
    }
}
