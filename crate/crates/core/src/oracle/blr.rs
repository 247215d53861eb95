use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, spd_solve, Matrix, SpdMatrix};
#[allow(unused_imports)]
use num_traits::Float;

/// Exact posterior of Bayesian linear regression `y = Xw + ε`,
/// `w ~ N(0, ηI)`, `ε ~ N(0, τ⁻¹I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlrPosterior {
    pub mean: Vec<f64>,
    pub covariance: SpdMatrix,
    pub precision: SpdMatrix,
    /// `ln p(y | X)`
    pub log_evidence: f64,
}

/// Posterior precision `τXᵀX + η⁻¹I`, mean `Λ⁻¹τXᵀy`, and the log marginal
/// likelihood of `y`.
pub fn blr_posterior(x: &Matrix, y: &[f64], eta: f64, tau: f64) -> Result<BlrPosterior> {
    if x.rows() != y.len() {
        return Err(Error::Shape { context: "blr targets", expected: x.rows(), found: y.len() });
    }
    if !(eta > 0.0 && tau > 0.0) {
        return Err(Error::invalid("blr", "eta and tau must be positive"));
    }
    let (n, d) = x.shape();
    let mut lam = x.t_matmul(x).scale(tau);
    lam.add_diagonal(1.0 / eta);
    let precision = SpdMatrix::new(lam)?.factored()?;
    let xty: Vec<f64> = x.t_mul_vec(y).iter().map(|v| tau * v).collect();
    let mean = spd_solve(&precision, &Matrix::column(&xty))?.into_vec();
    let covariance = precision.inverse()?;
    let n_f = n as f64;
    let log_evidence = -0.5 * n_f * (2.0 * core::f64::consts::PI).ln() + 0.5 * n_f * tau.ln()
        - 0.5 * d as f64 * eta.ln()
        - 0.5 * precision.log_det()?
        - 0.5 * tau * dot(y, y)
        + 0.5 * dot(&mean, &xty);
    Ok(BlrPosterior { mean, covariance, precision, log_evidence })
}

/// Unnormalized log posterior of the same model and its gradient, suitable
/// as an HMC target.
pub fn blr_log_density(x: &Matrix, y: &[f64], eta: f64, tau: f64, w: &[f64]) -> (f64, Vec<f64>) {
    let pred = x.mul_vec(w);
    let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let value = -0.5 * tau * dot(&resid, &resid) - 0.5 * dot(w, w) / eta;
    let mut grad = x.t_mul_vec(&resid);
    for (g, wi) in grad.iter_mut().zip(w) {
        *g = tau * *g - wi / eta;
    }
    (value, grad)
}
