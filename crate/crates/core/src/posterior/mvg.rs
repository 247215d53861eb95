use alloc::vec::Vec;

use rand::Rng;

use super::{gaussian_kl_to_spherical, Hyper};
use crate::error::{Error, Result};
use crate::linalg::{sample_mvg_with_factors, KroneckerPair, Matrix, SpdMatrix};
use crate::model::WeightSet;
#[allow(unused_imports)]
use num_traits::Float;

/// One layer of a matrix-variate Gaussian posterior.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MvgLayer {
    pub mean: Matrix,
    /// EMA of `a aᵀ`.
    pub abar: SpdMatrix,
    /// EMA of `g gᵀ`.
    pub sbar: SpdMatrix,
}

/// Damped Kronecker factors of one layer at damping `gamma`:
/// `A^γ = Ā + π√γ·I`, `S^γ = S̄ + π⁻¹√γ·I`, with their inverses.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DampedFactors {
    pub gamma: f64,
    pub pi: f64,
    pub a_damped: SpdMatrix,
    pub s_damped: SpdMatrix,
    pub a_inv: SpdMatrix,
    pub s_inv: SpdMatrix,
}

/// Norm-matching split `π = √((tr Ā / dim Ā) / (tr S̄ / dim S̄))`, clamped to
/// `[1e-3, 1e3]`; 1 when either trace is negligible.
pub fn factored_damping(abar: &SpdMatrix, sbar: &SpdMatrix) -> f64 {
    let ta = abar.trace();
    let ts = sbar.trace();
    if ta < 1e-12 || ts < 1e-12 {
        return 1.0;
    }
    ((ta / abar.dim() as f64) / (ts / sbar.dim() as f64)).sqrt().clamp(1e-3, 1e3)
}

impl DampedFactors {
    pub fn compute(abar: &SpdMatrix, sbar: &SpdMatrix, gamma: f64) -> Result<Self> {
        Self::compute_with_pi(abar, sbar, gamma, factored_damping(abar, sbar))
    }

    pub fn compute_with_pi(abar: &SpdMatrix, sbar: &SpdMatrix, gamma: f64, pi: f64) -> Result<Self> {
        let root = gamma.sqrt();
        let a_damped = abar.add_diagonal(pi * root).factored()?;
        let s_damped = sbar.add_diagonal(root / pi).factored()?;
        let a_inv = a_damped.inverse()?.factored()?;
        let s_inv = s_damped.inverse()?.factored()?;
        Ok(Self { gamma, pi, a_damped, s_damped, a_inv, s_inv })
    }

    /// `[A^γ]⁻¹ · v · [S^γ]⁻¹`
    pub fn precondition(&self, v: &Matrix) -> Matrix {
        self.a_inv.matrix().matmul(v).matmul(self.s_inv.matrix())
    }
}

/// Matrix-variate Gaussian posterior, independent across layers. Layer `l`
/// has `vec(W_l) ~ N(vec(M_l), [S^γin]⁻¹ ⊗ (λ/N)[A^γin]⁻¹)`.
///
/// Two caches of damped inverses are kept: one at `γ_in` for sampling and one
/// at `γ_in + γ_ex` for the mean update. Both are refreshed explicitly.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MvgPosterior {
    pub layers: Vec<MvgLayer>,
    pub hyper: Hyper,
    sampling: Option<Vec<DampedFactors>>,
    step: Option<Vec<DampedFactors>>,
}

impl MvgPosterior {
    /// Zero statistics; caches start fresh.
    pub fn new(mean: &WeightSet, hyper: Hyper) -> Result<Self> {
        let layers = mean
            .layers
            .iter()
            .map(|m| MvgLayer { mean: m.clone(), abar: SpdMatrix::zeros(m.rows()), sbar: SpdMatrix::zeros(m.cols()) })
            .collect();
        let mut p = Self { layers, hyper, sampling: None, step: None };
        p.refresh_all()?;
        Ok(p)
    }

    pub fn mean_weights(&self) -> WeightSet {
        WeightSet { layers: self.layers.iter().map(|l| l.mean.clone()).collect() }
    }

    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|l| l.mean.rows() * l.mean.cols()).sum()
    }

    /// Recompute π and the damped inverses from the current statistics, at
    /// `γ_in` (sampling) or `γ_in + γ_ex` (step) damping.
    pub fn refresh_damped_inverses(&mut self, use_total_damping: bool) -> Result<()> {
        let gamma = if use_total_damping { self.hyper.gamma() } else { self.hyper.gamma_in() };
        let factors = self.compute_factors(gamma)?;
        if use_total_damping {
            self.step = Some(factors);
        } else {
            self.sampling = Some(factors);
        }
        Ok(())
    }

    fn compute_factors(&self, gamma: f64) -> Result<Vec<DampedFactors>> {
        self.layers.iter().map(|l| DampedFactors::compute(&l.abar, &l.sbar, gamma)).collect()
    }

    /// Refresh both caches, sharing the work when `γ_ex = 0`.
    pub fn refresh_all(&mut self) -> Result<()> {
        let sampling = self.compute_factors(self.hyper.gamma_in())?;
        let step = if self.hyper.gamma() == self.hyper.gamma_in() {
            sampling.clone()
        } else {
            self.compute_factors(self.hyper.gamma())?
        };
        self.sampling = Some(sampling);
        self.step = Some(step);
        Ok(())
    }

    fn checked<'a>(&self, cache: &'a Option<Vec<DampedFactors>>, gamma: f64) -> Result<&'a [DampedFactors]> {
        match cache {
            Some(f) if f.len() == self.layers.len() && f.iter().all(|d| d.gamma == gamma) => Ok(f),
            _ => Err(Error::StaleCache),
        }
    }

    pub fn sampling_factors(&self) -> Result<&[DampedFactors]> {
        self.checked(&self.sampling, self.hyper.gamma_in())
    }

    pub fn step_factors(&self) -> Result<&[DampedFactors]> {
        self.checked(&self.step, self.hyper.gamma())
    }

    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WeightSet> {
        let factors = self.sampling_factors()?;
        let scale = self.hyper.noise_scale().sqrt();
        let layers = self
            .layers
            .iter()
            .zip(factors)
            .map(|(l, f)| {
                let lu = f.a_inv.cached_factor().ok_or(Error::StaleCache)?;
                let lv = f.s_inv.cached_factor().ok_or(Error::StaleCache)?;
                Ok(sample_mvg_with_factors(&l.mean, lu, lv, scale, rng))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightSet { layers })
    }

    /// Per-layer row covariance `(λ/N)[A^γin]⁻¹` and column covariance
    /// `[S^γin]⁻¹`.
    pub fn layer_covariances(&self) -> Result<Vec<(Matrix, Matrix)>> {
        let c = self.hyper.noise_scale();
        Ok(self.sampling_factors()?.iter().map(|f| (f.a_inv.matrix().scale(c), f.s_inv.matrix().clone())).collect())
    }

    /// Per-layer precision `(N/λ)·S^γin ⊗ A^γin` acting on `vec(W_l)`.
    pub fn precision(&self) -> Result<Vec<KroneckerPair>> {
        let c = self.hyper.noise_scale();
        Ok(self
            .sampling_factors()?
            .iter()
            .map(|f| KroneckerPair::new(f.s_damped.clone(), f.a_damped.clone(), 1.0 / c))
            .collect())
    }

    pub fn kl_to_prior(&self) -> Result<f64> {
        let c = self.hyper.noise_scale();
        let mut kl = 0.0;
        for (l, f) in self.layers.iter().zip(self.sampling_factors()?) {
            let (n1, n2) = l.mean.shape();
            let d = n1 * n2;
            // Σ = c·V ⊗ U with U = [A^γ]⁻¹ (n1), V = [S^γ]⁻¹ (n2).
            let log_det = d as f64 * c.ln() - n2 as f64 * f.a_damped.log_det()? - n1 as f64 * f.s_damped.log_det()?;
            let trace = c * f.a_inv.trace() * f.s_inv.trace();
            let mean_sq = l.mean.frobenius_dot(&l.mean);
            kl += gaussian_kl_to_spherical(d, log_det, trace, mean_sq, self.hyper.eta);
        }
        Ok(kl)
    }
}
