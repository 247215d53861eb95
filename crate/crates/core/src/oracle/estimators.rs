use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, dot, standard_normal_vec, Matrix, SpdMatrix};
#[allow(unused_imports)]
use num_traits::Float;

/// `f(w) = ½ wᵀHw + bᵀw` with symmetric `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub h: Matrix,
    pub b: Vec<f64>,
}

impl Quadratic {
    pub fn new(h: Matrix, b: Vec<f64>) -> Result<Self> {
        if !h.is_square() || h.rows() != b.len() {
            return Err(Error::Shape { context: "quadratic", expected: b.len(), found: h.rows() });
        }
        Ok(Self { h: h.symmetrized(), b })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        0.5 * dot(w, &self.h.mul_vec(w)) + dot(&self.b, w)
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.h.mul_vec(w).iter().zip(&self.b).map(|(a, b)| a + b).collect()
    }

    /// `E[f(w)]` under `N(μ, Σ)`; `Σ` need not be symmetric here so that
    /// single entries can be perturbed.
    pub fn expectation(&self, mu: &[f64], sigma: &Matrix) -> f64 {
        self.value(mu) + 0.5 * self.h.frobenius_dot(&sigma.transpose())
    }
}

/// Monte-Carlo estimates of both Gaussian gradient identities next to the
/// exact gradients of `E[f]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorReport {
    pub num_samples: usize,
    /// Exact `∇_μ E[f]`.
    pub grad_mu: Vec<f64>,
    /// Sample mean of `∇f(w)`.
    pub grad_mu_mc: Vec<f64>,
    pub grad_mu_se: Vec<f64>,
    /// Exact `∇_Σ E[f]`, by central differences of the closed-form expectation.
    pub grad_sigma: Matrix,
    /// Sample mean of `∇²f(w)`.
    pub hessian_mc: Matrix,
    /// Sample mean of `sym(Σ⁻¹(w − μ)∇f(w)ᵀ)`, an estimate of `E[∇²f]` that
    /// uses gradients only.
    pub stein_mc: Matrix,
    pub stein_se: Matrix,
}

impl EstimatorReport {
    pub fn mu_passes(&self, k_se: f64) -> bool {
        self.grad_mu
            .iter()
            .zip(&self.grad_mu_mc)
            .zip(&self.grad_mu_se)
            .all(|((e, m), se)| (e - m).abs() <= k_se * se + 1e-12 * e.abs().max(1.0))
    }

    /// Whether `factor · E[∇²f]` matches `∇_Σ E[f]` for both Hessian
    /// estimates. The correct factor is ½.
    pub fn sigma_passes(&self, factor: f64, k_se: f64) -> bool {
        let d = self.grad_sigma.rows();
        (0..d).all(|i| {
            (0..d).all(|j| {
                let exact = self.grad_sigma[(i, j)];
                let tol = 1e-9 * exact.abs().max(1.0);
                let hess_ok = (factor * self.hessian_mc[(i, j)] - exact).abs() <= tol;
                let stein_ok =
                    (factor * self.stein_mc[(i, j)] - exact).abs() <= k_se * factor.abs() * self.stein_se[(i, j)] + tol;
                hess_ok && stein_ok
            })
        })
    }

    pub fn passes(&self, k_se: f64) -> bool {
        self.mu_passes(k_se) && self.sigma_passes(0.5, k_se)
    }
}

pub fn check_gaussian_estimators<R: Rng + ?Sized>(
    f: &Quadratic,
    mu: &[f64],
    sigma: &SpdMatrix,
    num_samples: usize,
    rng: &mut R,
) -> Result<EstimatorReport> {
    let d = f.dim();
    if mu.len() != d || sigma.dim() != d {
        return Err(Error::Shape { context: "estimator check", expected: d, found: mu.len() });
    }
    if num_samples < 2 {
        return Err(Error::invalid("num_samples", "need at least 2 samples"));
    }
    let l = cholesky(sigma)?;
    let n = num_samples as f64;

    let mut g_sum = vec![0.0; d];
    let mut g_sq = vec![0.0; d];
    let mut s_sum = Matrix::zeros(d, d);
    let mut s_sq = Matrix::zeros(d, d);
    for _ in 0..num_samples {
        let z = standard_normal_vec(d, rng);
        let w: Vec<f64> = l.mul_vec(&z).iter().zip(mu).map(|(a, m)| a + m).collect();
        let g = f.gradient(&w);
        for i in 0..d {
            g_sum[i] += g[i];
            g_sq[i] += g[i] * g[i];
        }
        // Σ⁻¹(w − μ) = L⁻ᵀ z
        let score = solve_upper_transpose(&l, &z);
        let s = Matrix::outer(&score, &g).symmetrized();
        for (idx, v) in s.as_slice().iter().enumerate() {
            s_sum.as_mut_slice()[idx] += v;
            s_sq.as_mut_slice()[idx] += v * v;
        }
    }
    let se = |sum: f64, sq: f64| ((sq - sum * sum / n).max(0.0) / (n - 1.0) / n).sqrt();
    let grad_mu_mc: Vec<f64> = g_sum.iter().map(|s| s / n).collect();
    let grad_mu_se: Vec<f64> = g_sum.iter().zip(&g_sq).map(|(s, q)| se(*s, *q)).collect();
    let stein_mc = s_sum.scale(1.0 / n);
    let mut stein_se = Matrix::zeros(d, d);
    for idx in 0..d * d {
        stein_se.as_mut_slice()[idx] = se(s_sum.as_slice()[idx], s_sq.as_slice()[idx]);
    }

    let sig = sigma.matrix().clone();
    let h = 1e-3;
    let grad_sigma = Matrix::from_fn(d, d, |i, j| {
        let mut p = sig.clone();
        p[(i, j)] += h;
        let hi = f.expectation(mu, &p);
        p[(i, j)] -= 2.0 * h;
        let lo = f.expectation(mu, &p);
        (hi - lo) / (2.0 * h)
    });
    let h_mu = 1e-3;
    let grad_mu: Vec<f64> = (0..d)
        .map(|i| {
            let mut p = mu.to_vec();
            p[i] += h_mu;
            let hi = f.expectation(&p, &sig);
            p[i] -= 2.0 * h_mu;
            let lo = f.expectation(&p, &sig);
            (hi - lo) / (2.0 * h_mu)
        })
        .collect();

    Ok(EstimatorReport {
        num_samples,
        grad_mu,
        grad_mu_mc,
        grad_mu_se,
        grad_sigma,
        hessian_mc: f.h.clone(),
        stein_mc,
        stein_se,
    })
}

/// Solve `Lᵀ x = z` for lower-triangular `L`.
fn solve_upper_transpose(l: &Matrix, z: &[f64]) -> Vec<f64> {
    let d = z.len();
    let mut x = z.to_vec();
    for i in (0..d).rev() {
        let mut s = x[i];
        for k in i + 1..d {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}
