//! Gaussian variational families over network weights, plus the Gamma
//! posterior over the observation noise precision.
//!
//! Every family keeps its covariance implicitly, as a function of a Fisher
//! moving average and the damping implied by [`Hyper`].

mod elbo;
mod ffg;
mod full;
mod gamma;
mod mvg;
mod reward;

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{KroneckerPair, SpdMatrix};
use crate::model::WeightSet;
#[allow(unused_imports)]
use num_traits::Float;

pub use elbo::{elbo_estimate, NoiseModel};
pub use ffg::FfgPosterior;
pub use full::FullPosterior;
pub use gamma::{gamma_kl, GammaPosterior};
pub use mvg::{factored_damping, DampedFactors, MvgLayer, MvgPosterior};
pub use reward::{graves_sigma_gradients, intrinsic_reward, SigmaGradients};

/// Regularization hyperparameters shared by all families.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Hyper {
    /// KL weight λ.
    pub lambda: f64,
    /// Training-set size N.
    pub n_data: usize,
    /// Prior variance η.
    pub eta: f64,
    /// Extrinsic damping γ_ex.
    pub gamma_ex: f64,
}

impl Hyper {
    pub fn new(lambda: f64, n_data: usize, eta: f64, gamma_ex: f64) -> Result<Self> {
        let h = Self { lambda, n_data, eta, gamma_ex };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if self.n_data == 0 {
            return Err(Error::invalid("n_data", "must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        if !(self.gamma_ex >= 0.0 && self.gamma_ex.is_finite()) {
            return Err(Error::invalid("gamma_ex", "must be nonnegative"));
        }
        Ok(())
    }

    /// Intrinsic damping `λ / (N η)`.
    pub fn gamma_in(&self) -> f64 {
        self.lambda / (self.n_data as f64 * self.eta)
    }

    /// Total damping `γ_in + γ_ex`.
    pub fn gamma(&self) -> f64 {
        self.gamma_in() + self.gamma_ex
    }

    /// `λ / N`, the scale between damped Fisher and posterior precision.
    pub fn noise_scale(&self) -> f64 {
        self.lambda / self.n_data as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Family {
    Ffg,
    Mvg,
    Full,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Ffg => "nng-ffg",
            Family::Mvg => "nng-mvg",
            Family::Full => "nng-full",
        }
    }
}

/// Posterior precision in each family's natural representation.
#[derive(Clone, Debug, PartialEq)]
pub enum Precision {
    Diagonal(Vec<f64>),
    Kronecker(Vec<KroneckerPair>),
    Dense(SpdMatrix),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "lowercase"))]
pub enum Posterior {
    Ffg(FfgPosterior),
    Mvg(MvgPosterior),
    Full(FullPosterior),
}

impl Posterior {
    pub fn family(&self) -> Family {
        match self {
            Posterior::Ffg(_) => Family::Ffg,
            Posterior::Mvg(_) => Family::Mvg,
            Posterior::Full(_) => Family::Full,
        }
    }

    pub fn hyper(&self) -> &Hyper {
        match self {
            Posterior::Ffg(p) => &p.hyper,
            Posterior::Mvg(p) => &p.hyper,
            Posterior::Full(p) => &p.hyper,
        }
    }

    pub fn mean_weights(&self) -> WeightSet {
        match self {
            Posterior::Ffg(p) => p.mean_weights(),
            Posterior::Mvg(p) => p.mean_weights(),
            Posterior::Full(p) => p.mean_weights(),
        }
    }

    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WeightSet> {
        match self {
            Posterior::Ffg(p) => Ok(p.sample_weights(rng)),
            Posterior::Mvg(p) => p.sample_weights(rng),
            Posterior::Full(p) => p.sample_weights(rng),
        }
    }

    pub fn precision(&self) -> Result<Precision> {
        match self {
            Posterior::Ffg(p) => Ok(Precision::Diagonal(p.precision())),
            Posterior::Mvg(p) => Ok(Precision::Kronecker(p.precision()?)),
            Posterior::Full(p) => Ok(Precision::Dense(p.precision())),
        }
    }

    pub fn kl_to_prior(&self) -> Result<f64> {
        match self {
            Posterior::Ffg(p) => Ok(p.kl_to_prior()),
            Posterior::Mvg(p) => p.kl_to_prior(),
            Posterior::Full(p) => p.kl_to_prior(),
        }
    }
}

/// `KL(N(μ, Σ) ‖ N(0, ηI))` from summary statistics of `Σ`.
pub(crate) fn gaussian_kl_to_spherical(d: usize, log_det_sigma: f64, trace_sigma: f64, mean_sq: f64, eta: f64) -> f64 {
    let d = d as f64;
    0.5 * (d * eta.ln() - log_det_sigma - d + trace_sigma / eta + mean_sq / eta)
}
