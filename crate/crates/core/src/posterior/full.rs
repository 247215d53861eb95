use alloc::vec::Vec;

use rand::Rng;

use super::{gaussian_kl_to_spherical, Hyper};
use crate::error::Result;
use crate::linalg::{dot, sample_gaussian_precision, Matrix, SpdMatrix};
use crate::model::WeightSet;

/// Full-covariance Gaussian with precision `Λ = (N/λ)F̄ + η⁻¹I`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FullPosterior {
    pub shapes: Vec<(usize, usize)>,
    pub mu: Vec<f64>,
    pub fbar: SpdMatrix,
    pub hyper: Hyper,
}

impl FullPosterior {
    pub fn new(mean: &WeightSet, hyper: Hyper) -> Self {
        let mu = mean.flatten();
        let shapes = mean.layers.iter().map(|m| m.shape()).collect();
        Self { shapes, fbar: SpdMatrix::zeros(mu.len()), mu, hyper }
    }

    pub fn num_weights(&self) -> usize {
        self.mu.len()
    }

    pub fn mean_weights(&self) -> WeightSet {
        WeightSet::from_flat(&self.shapes, &self.mu).expect("shapes are kept consistent with mu")
    }

    pub fn precision(&self) -> SpdMatrix {
        let mut m = self.fbar.matrix().scale(1.0 / self.hyper.noise_scale());
        m.add_diagonal(1.0 / self.hyper.eta);
        SpdMatrix::new(m).expect("finite symmetric by construction")
    }

    pub fn covariance(&self) -> Result<Matrix> {
        Ok(self.precision().inverse()?.into_matrix())
    }

    pub fn sample_flat<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        Ok(sample_gaussian_precision(&self.mu, &self.precision(), rng)?)
    }

    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WeightSet> {
        WeightSet::from_flat(&self.shapes, &self.sample_flat(rng)?)
    }

    pub fn kl_to_prior(&self) -> Result<f64> {
        let prec = self.precision();
        let log_det = -prec.log_det()?;
        let trace = prec.inverse()?.trace();
        Ok(gaussian_kl_to_spherical(self.mu.len(), log_det, trace, dot(&self.mu, &self.mu), self.hyper.eta))
    }
}
