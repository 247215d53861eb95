use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rng::stream;
#[allow(unused_imports)]
use num_traits::Float;

/// Fixed-step Hamiltonian Monte Carlo with an identity mass matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HmcConfig {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    /// Kept samples per chain.
    pub num_samples: usize,
    pub burn_in: usize,
    pub num_chains: usize,
    pub seed: u64,
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("hmc step_size", "must be positive"));
        }
        if self.leapfrog_steps == 0 || self.num_samples == 0 || self.num_chains == 0 {
            return Err(Error::invalid("hmc counts", "leapfrog steps, samples and chains must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmcResult {
    /// Kept samples of every chain, chain 0 first.
    pub samples: Vec<Vec<f64>>,
    /// Metropolis acceptance rate of each chain over all iterations.
    pub acceptance: Vec<f64>,
}

impl HmcResult {
    pub fn min_acceptance(&self) -> f64 {
        self.acceptance.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Run `cfg.num_chains` independent chains from `init`. `log_density`
/// returns the log target and its gradient. Chain `c` draws from stream `c`
/// of `cfg.seed`.
pub fn hmc_sample<F>(mut log_density: F, init: &[f64], cfg: &HmcConfig) -> Result<HmcResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    cfg.validate()?;
    let (lp0, g0) = log_density(init);
    if !lp0.is_finite() || g0.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteDensity);
    }
    let mut samples = Vec::with_capacity(cfg.num_chains * cfg.num_samples);
    let mut acceptance = Vec::with_capacity(cfg.num_chains);
    for c in 0..cfg.num_chains {
        let (chain, rate) = run_chain(&mut log_density, init, (lp0, g0.clone()), cfg, c as u64);
        samples.extend(chain);
        acceptance.push(rate);
    }
    Ok(HmcResult { samples, acceptance })
}

/// One chain; returns its kept samples and acceptance rate.
pub(crate) fn run_chain<F>(
    log_density: &mut F,
    init: &[f64],
    start: (f64, Vec<f64>),
    cfg: &HmcConfig,
    chain: u64,
) -> (Vec<Vec<f64>>, f64)
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut rng = stream(cfg.seed, chain);
    let d = init.len();
    let eps = cfg.step_size;
    let mut x = init.to_vec();
    let (mut lp, mut grad) = start;
    let mut kept = Vec::with_capacity(cfg.num_samples);
    let mut accepted = 0usize;
    let total = cfg.burn_in + cfg.num_samples;
    for it in 0..total {
        let p0: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let h0 = -lp + 0.5 * dot(&p0, &p0);
        let mut xn = x.clone();
        let mut p = p0;
        let mut gn = grad.clone();
        let mut lpn = lp;
        for (pi, gi) in p.iter_mut().zip(&gn) {
            *pi += 0.5 * eps * gi;
        }
        for step in 0..cfg.leapfrog_steps {
            for (xi, pi) in xn.iter_mut().zip(&p) {
                *xi += eps * pi;
            }
            let (v, g) = log_density(&xn);
            lpn = v;
            gn = g;
            if !lpn.is_finite() {
                break;
            }
            let scale = if step + 1 == cfg.leapfrog_steps { 0.5 } else { 1.0 };
            for (pi, gi) in p.iter_mut().zip(&gn) {
                *pi += scale * eps * gi;
            }
        }
        let h1 = -lpn + 0.5 * dot(&p, &p);
        let log_u: f64 = rng.random::<f64>().ln();
        if h1.is_finite() && gn.iter().all(|g| g.is_finite()) && log_u < h0 - h1 {
            x = xn;
            lp = lpn;
            grad = gn;
            accepted += 1;
        }
        if it >= cfg.burn_in {
            kept.push(x.clone());
        }
    }
    (kept, accepted as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{standard_normal_vec, Matrix};
    use crate::oracle::{blr_log_density, blr_posterior};
    use crate::rng::seeded;
    use alloc::vec;

    fn std_normal(x: &[f64]) -> (f64, Vec<f64>) {
        (-0.5 * dot(x, x), x.iter().map(|v| -v).collect())
    }

    fn moments(s: &[Vec<f64>]) -> (Vec<f64>, Matrix) {
        let d = s[0].len();
        let n = s.len() as f64;
        let mut mean = vec![0.0; d];
        for x in s {
            for i in 0..d {
                mean[i] += x[i] / n;
            }
        }
        let mut cov = Matrix::zeros(d, d);
        for x in s {
            let c: Vec<f64> = x.iter().zip(&mean).map(|(a, m)| a - m).collect();
            cov.add_scaled(&Matrix::outer(&c, &c), 1.0 / (n - 1.0));
        }
        (mean, cov)
    }

    #[test]
    fn standard_gaussian_moments() {
        let cfg =
            HmcConfig { step_size: 0.3, leapfrog_steps: 7, num_samples: 2500, burn_in: 200, num_chains: 4, seed: 1 };
        let r = hmc_sample(std_normal, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(r.samples.len(), 10_000);
        let (mean, cov) = moments(&r.samples);
        // A trajectory of length 2.1 rotates phase space by about 120°, so
        // successive draws are close to independent.
        let se = (1.0f64 / 10_000.0).sqrt();
        assert!(mean.iter().all(|m| m.abs() < 3.0 * se), "{mean:?}");
        assert!(cov.max_abs_diff(&Matrix::identity(2)) < 0.1, "{cov:?}");
    }

    #[test]
    fn tiny_step_accepts_everything() {
        let cfg =
            HmcConfig { step_size: 1e-6, leapfrog_steps: 1, num_samples: 200, burn_in: 0, num_chains: 2, seed: 0 };
        let r = hmc_sample(std_normal, &[0.5, -0.3], &cfg).unwrap();
        assert!(r.min_acceptance() > 0.999);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = HmcConfig { step_size: 0.2, leapfrog_steps: 5, num_samples: 50, burn_in: 10, num_chains: 2, seed: 7 };
        let a = hmc_sample(std_normal, &[1.0], &cfg).unwrap();
        let b = hmc_sample(std_normal, &[1.0], &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples[..50], a.samples[50..]);
    }

    #[test]
    fn nonfinite_start_is_rejected() {
        let cfg = HmcConfig { step_size: 0.1, leapfrog_steps: 1, num_samples: 1, burn_in: 0, num_chains: 1, seed: 0 };
        let bad = |_: &[f64]| (f64::NEG_INFINITY, vec![0.0]);
        assert!(matches!(hmc_sample(bad, &[0.0], &cfg), Err(Error::NonFiniteDensity)));
    }

    #[test]
    fn blr_moments_within_five_percent() {
        let mut rng = seeded(11);
        let (n, d) = (30, 3);
        let x = Matrix::new(n, d, standard_normal_vec(n * d, &mut rng)).unwrap();
        let w_true = [1.0, -2.0, 0.5];
        let y: Vec<f64> = x.mul_vec(&w_true).iter().map(|v| v + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        let exact = blr_posterior(&x, &y, 1.0, 4.0).unwrap();
        let cfg =
            HmcConfig { step_size: 0.05, leapfrog_steps: 20, num_samples: 5000, burn_in: 500, num_chains: 4, seed: 3 };
        let r = hmc_sample(|w| blr_log_density(&x, &y, 1.0, 4.0, w), &[0.0; 3], &cfg).unwrap();
        assert!(r.min_acceptance() > 0.5);
        let (mean, cov) = moments(&r.samples);
        for i in 0..d {
            assert!((mean[i] - exact.mean[i]).abs() < 0.05 * exact.mean[i].abs(), "{mean:?} vs {:?}", exact.mean);
        }
        let rel = cov.sub(exact.covariance.matrix()).frobenius_norm() / exact.covariance.matrix().frobenius_norm();
        assert!(rel < 0.05, "{rel}");
    }
}
