use crate::error::{Error, Result};
use crate::model::{predict, Batch, MlpArchitecture, Target, WeightSet};
use crate::posterior::GammaPosterior;
use crate::special::trigamma;
#[allow(unused_imports)]
use num_traits::Float;

/// Gradient of the τ-dependent ELBO terms, divided by `n_data`, with respect
/// to `(α, β)`. `mean_sq_residual` is the minibatch mean of `(y − ŷ)²`.
///
/// Objective: `(N/2)[ψ(α) − ln β − (α/β)·R − ln 2π] − KL(q ‖ p)`.
pub fn gamma_tau_gradient(
    q: &GammaPosterior,
    prior: &GammaPosterior,
    mean_sq_residual: f64,
    n_data: usize,
) -> Result<(f64, f64)> {
    q.validate()?;
    prior.validate()?;
    let n = n_data as f64;
    let (a, b) = (q.alpha, q.beta);
    let r = mean_sq_residual;
    let d_ll_a = 0.5 * n * (trigamma(a) - r / b);
    let d_ll_b = 0.5 * n * (-1.0 / b + a * r / (b * b));
    let d_kl_a = (a - prior.alpha) * trigamma(a) + prior.beta / b - 1.0;
    let d_kl_b = prior.alpha / b - a * prior.beta / (b * b);
    Ok(((d_ll_a - d_kl_a) / n, (d_ll_b - d_kl_b) / n))
}

/// Fisher information of `Gamma(α, β)` in `(α, β)` coordinates.
pub fn gamma_fisher(q: &GammaPosterior) -> [[f64; 2]; 2] {
    [[trigamma(q.alpha), -1.0 / q.beta], [-1.0 / q.beta, q.alpha / (q.beta * q.beta)]]
}

/// One stochastic natural-gradient step on `q(τ)`, using residuals at the
/// weight sample `w`: `(α, β) += lr · F⁻¹ ∇(ELBO)`.
///
/// The preconditioned direction is `(α̂ − α, β̂ − β)` with `α̂ = a₀ + N/2`
/// and `β̂ = b₀ + N R/2`, so `lr ≤ 1` keeps both parameters positive.
pub fn gamma_tau_step(
    q: &GammaPosterior,
    prior: &GammaPosterior,
    arch: &MlpArchitecture,
    w: &WeightSet,
    batch: &Batch,
    n_data: usize,
    lr: f64,
) -> Result<GammaPosterior> {
    if batch.is_empty() {
        return Err(Error::EmptyData);
    }
    if !(lr > 0.0 && lr <= 1.0) {
        return Err(Error::invalid("tau lr", "must lie in (0, 1]"));
    }
    let mut total = 0.0;
    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        let Target::Real(v) = y else {
            return Err(Error::invalid("target", "noise precision needs real-valued targets"));
        };
        for (yh, yv) in predict(arch, w, x).iter().zip(v) {
            total += (yv - yh) * (yv - yh);
        }
    }
    // Outputs share one τ, so residuals of every output count as data.
    let mean_sq = total / batch.len() as f64;
    let (ga, gb) = gamma_tau_gradient(q, prior, mean_sq, n_data)?;
    let n = n_data as f64;
    let [[faa, fab], [_, fbb]] = gamma_fisher(q);
    let det = faa * fbb - fab * fab;
    let da = n * (fbb * ga - fab * gb) / det;
    let db = n * (faa * gb - fab * ga) / det;
    if !(da.is_finite() && db.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    GammaPosterior::new(q.alpha + lr * da, q.beta + lr * db)
}
