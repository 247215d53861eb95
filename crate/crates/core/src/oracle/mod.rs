//! Ground-truth engines for verification: exact conjugate posteriors,
//! Hamiltonian Monte Carlo, finite differences, and Monte-Carlo checks of
//! the Gaussian gradient-estimator identities.
//!
//! Nothing here depends on the `posterior` or `optim` modules.

mod blr;
mod estimators;
mod hmc;

use alloc::vec::Vec;

pub use blr::{blr_log_density, blr_posterior, BlrPosterior};
pub use estimators::{check_gaussian_estimators, EstimatorReport, Quadratic};
pub use hmc::{hmc_sample, HmcConfig, HmcResult};

/// Central differences `(f(x + εeᵢ) − f(x − εeᵢ)) / 2ε` for every coordinate.
pub fn finite_diff_grad<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], eps: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + eps;
            let hi = f(&p);
            p[i] = x[i] - eps;
            let lo = f(&p);
            p[i] = x[i];
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}
