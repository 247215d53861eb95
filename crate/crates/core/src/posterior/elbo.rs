use rand::Rng;

use super::{gamma_kl, GammaPosterior, Posterior};
use crate::error::{Error, Result};
use crate::model::{expected_gaussian_ll, log_likelihood, predict, Batch, MlpArchitecture, Target};

/// How the observation noise enters the likelihood.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NoiseModel {
    /// No noise parameter (categorical likelihood).
    None,
    /// Known Gaussian precision τ.
    Fixed(f64),
    /// `q(τ)` with its prior.
    Variational { q: GammaPosterior, prior: GammaPosterior },
}

impl NoiseModel {
    /// Point precision for gradient computations: τ, or `E_q[τ]`.
    pub fn point_tau(&self) -> Option<f64> {
        match self {
            NoiseModel::None => None,
            NoiseModel::Fixed(t) => Some(*t),
            NoiseModel::Variational { q, .. } => Some(q.mean()),
        }
    }
}

/// Monte Carlo ELBO over `data`, reported for the whole training set:
/// `N · mean E[log p] − λ KL(q(w) ‖ p(w)) − KL(q(τ) ‖ p(τ))`.
pub fn elbo_estimate<R: Rng + ?Sized>(
    arch: &MlpArchitecture,
    posterior: &Posterior,
    noise: &NoiseModel,
    data: &Batch,
    num_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if num_samples == 0 {
        return Err(Error::invalid("num_samples", "must be at least 1"));
    }
    let mut total = 0.0;
    for _ in 0..num_samples {
        let w = posterior.sample_weights(rng)?;
        for (x, y) in data.inputs.iter().zip(&data.targets) {
            let out = predict(arch, &w, x);
            total += match (noise, y) {
                (NoiseModel::Variational { q, .. }, Target::Real(v)) => expected_gaussian_ll(&out, v, q)?,
                _ => log_likelihood(arch, &out, y, noise.point_tau())?,
            };
        }
    }
    let hyper = posterior.hyper();
    let mean_ll = total / (num_samples * data.len()) as f64;
    let mut elbo = hyper.n_data as f64 * mean_ll - hyper.lambda * posterior.kl_to_prior()?;
    if let NoiseModel::Variational { q, prior } = noise {
        elbo -= gamma_kl(q, prior)?;
    }
    Ok(elbo)
}
