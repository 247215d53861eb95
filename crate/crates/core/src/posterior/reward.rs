use alloc::vec::Vec;

use super::MvgPosterior;
use crate::error::{Error, Result};
use crate::linalg::{KroneckerPair, Matrix, SpdMatrix};

/// ELBO gradients with respect to the row covariance `Σ₁` (`n1 × n1`) and
/// column covariance `Σ₂` (`n2 × n2`) of one MVG layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaGradients {
    pub sigma1: Matrix,
    pub sigma2: Matrix,
}

/// Σ-gradients of the ELBO with the data Hessian replaced by the Kronecker
/// Fisher `S̄ ⊗ Ā`. With `Σ = Σ₂ ⊗ Σ₁` the full gradient is
/// `G = −½N(S̄⊗Ā) − (λ/2η)I⊗I + (λ/2)Σ₂⁻¹⊗Σ₁⁻¹`, and the chain rule through the
/// Kronecker product gives `∇Σ₁ = Σ_t tr(Σ₂P_t)Q_t`, `∇Σ₂ = Σ_t tr(Σ₁Q_t)P_t`
/// for `G = Σ_t P_t ⊗ Q_t`.
pub fn graves_sigma_gradients(p: &MvgPosterior) -> Result<Vec<SigmaGradients>> {
    let h = &p.hyper;
    let n = h.n_data as f64;
    let covs = p.layer_covariances()?;
    p.layers
        .iter()
        .zip(covs)
        .map(|(l, (s1, s2))| {
            let (n1, n2) = (s1.rows(), s2.rows());
            let s1_inv = SpdMatrix::new(s1.clone())?.inverse()?.into_matrix();
            let s2_inv = SpdMatrix::new(s2.clone())?.inverse()?.into_matrix();
            let a = l.abar.matrix();
            let s = l.sbar.matrix();

            let mut g1 = a.scale(-0.5 * n * s2.frobenius_dot(s));
            g1.add_diagonal(-0.5 * h.lambda / h.eta * s2.trace());
            g1.add_scaled(&s1_inv, 0.5 * h.lambda * n2 as f64);

            let mut g2 = s.scale(-0.5 * n * s1.frobenius_dot(a));
            g2.add_diagonal(-0.5 * h.lambda / h.eta * s1.trace());
            g2.add_scaled(&s2_inv, 0.5 * h.lambda * n1 as f64);
            Ok(SigmaGradients { sigma1: g1, sigma2: g2 })
        })
        .collect()
}

/// KL between successive MVG posteriors after a natural-gradient step of
/// size `step`, summed over layers:
/// `½α̃²[⟨g, Σ₁gΣ₂⟩ + (2/n2)⟨G₁, Σ₁G₁Σ₁⟩ + (2/n1)⟨G₂, Σ₂G₂Σ₂⟩]`.
/// The Fisher block coupling `Σ₁` and `Σ₂` is dropped.
pub fn intrinsic_reward(p: &MvgPosterior, grad_mu: &[Matrix], grad_sigma: &[SigmaGradients], step: f64) -> Result<f64> {
    let covs = p.layer_covariances()?;
    if grad_mu.len() != covs.len() {
        return Err(Error::Shape {
            context: "intrinsic_reward mean gradients",
            expected: covs.len(),
            found: grad_mu.len(),
        });
    }
    if grad_sigma.len() != covs.len() {
        return Err(Error::Shape {
            context: "intrinsic_reward covariance gradients",
            expected: covs.len(),
            found: grad_sigma.len(),
        });
    }
    let mut total = 0.0;
    for ((s1, s2), (g, gs)) in covs.into_iter().zip(grad_mu.iter().zip(grad_sigma)) {
        let (n1, n2) = (s1.rows(), s2.rows());
        if g.shape() != (n1, n2) || gs.sigma1.shape() != (n1, n1) || gs.sigma2.shape() != (n2, n2) {
            return Err(Error::Shape {
                context: "intrinsic_reward layer",
                expected: n1 * n2,
                found: g.rows() * g.cols(),
            });
        }
        let pair = KroneckerPair::new(SpdMatrix::new(s2.clone())?, SpdMatrix::new(s1.clone())?, 1.0);
        let mu_term = crate::linalg::kron_quadratic_form(&pair, g)?;
        let t1 = gs.sigma1.frobenius_dot(&s1.matmul(&gs.sigma1).matmul(&s1)).max(0.0);
        let t2 = gs.sigma2.frobenius_dot(&s2.matmul(&gs.sigma2).matmul(&s2)).max(0.0);
        total += mu_term + 2.0 / n2 as f64 * t1 + 2.0 / n1 as f64 * t2;
    }
    Ok(0.5 * step * step * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::standard_normal_vec;
    use crate::model::{Activation, LikelihoodKind, MlpArchitecture, WeightSet};
    use crate::posterior::Hyper;
    use crate::rng::seeded;
    use alloc::vec;
    use rand::Rng;

    fn random_psd(n: usize, rng: &mut impl Rng) -> SpdMatrix {
        let b = Matrix::new(n, n, standard_normal_vec(n * n, rng)).unwrap();
        SpdMatrix::new(b.matmul(&b.transpose())).unwrap()
    }

    fn random_matrix(r: usize, c: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::new(r, c, standard_normal_vec(r * c, rng)).unwrap()
    }

    fn posterior(rng: &mut impl Rng) -> MvgPosterior {
        let arch = MlpArchitecture::new(vec![2, 3], Activation::Relu, LikelihoodKind::Gaussian).unwrap();
        let mut p = MvgPosterior::new(&WeightSet::init(&arch, rng), Hyper::new(1.0, 20, 1.0, 0.0).unwrap()).unwrap();
        p.layers[0].abar = random_psd(3, rng);
        p.layers[0].sbar = random_psd(3, rng);
        p.refresh_all().unwrap();
        p
    }

    fn zero_sigma(n1: usize, n2: usize) -> SigmaGradients {
        SigmaGradients { sigma1: Matrix::zeros(n1, n1), sigma2: Matrix::zeros(n2, n2) }
    }

    #[test]
    fn zero_gradients_give_zero() {
        let p = posterior(&mut seeded(0));
        let r = intrinsic_reward(&p, &[Matrix::zeros(3, 3)], &[zero_sigma(3, 3)], 0.1).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn quadratic_in_step_and_nonnegative() {
        let mut rng = seeded(1);
        let p = posterior(&mut rng);
        for _ in 0..10 {
            let g = random_matrix(3, 3, &mut rng);
            let gs = SigmaGradients {
                sigma1: random_psd(3, &mut rng).into_matrix(),
                sigma2: random_matrix(3, 3, &mut rng).symmetrized(),
            };
            let r1 = intrinsic_reward(&p, core::slice::from_ref(&g), core::slice::from_ref(&gs), 0.05).unwrap();
            let r2 = intrinsic_reward(&p, &[g], &[gs], 0.1).unwrap();
            assert!(r1 >= 0.0);
            assert!((r2 - 4.0 * r1).abs() <= 1e-12 * r2.abs().max(1.0));
        }
    }

    #[test]
    fn identity_covariance_reduction() {
        // λ/N = 1 and zero statistics with γ_in = 1 give Σ₁ = Σ₂ = I.
        let arch = MlpArchitecture::new(vec![1, 2], Activation::Relu, LikelihoodKind::Gaussian).unwrap();
        let p = MvgPosterior::new(&WeightSet::zeros(&arch), Hyper::new(1.0, 1, 1.0, 0.0).unwrap()).unwrap();
        let g = Matrix::new(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let r = intrinsic_reward(&p, core::slice::from_ref(&g), &[zero_sigma(2, 2)], 0.3).unwrap();
        assert!((r - 0.5 * 0.09 * g.frobenius_dot(&g)).abs() < 1e-14);
    }

    #[test]
    fn sigma_gradients_match_finite_differences() {
        // With G held at its current value, ∇Σ₁ is the gradient of Σ₁' ↦ ⟨G, Σ₂ ⊗ Σ₁'⟩.
        let mut rng = seeded(3);
        let p = posterior(&mut rng);
        let h = p.hyper;
        let (s1, s2) = p.layer_covariances().unwrap().remove(0);
        let sigma = s2.kron(&s1);
        let sigma_inv = SpdMatrix::new(sigma.clone()).unwrap().inverse().unwrap().into_matrix();
        let fisher = p.layers[0].sbar.matrix().kron(p.layers[0].abar.matrix());
        let d = sigma.rows();
        let mut g = fisher.scale(-0.5 * h.n_data as f64);
        g.add_diagonal(-0.5 * h.lambda / h.eta);
        g.add_scaled(&sigma_inv, 0.5 * h.lambda);
        assert_eq!(g.rows(), d);

        let grads = graves_sigma_gradients(&p).unwrap().remove(0);
        let eps = 1e-6;
        for i in 0..3 {
            for j in 0..3 {
                let mut e = Matrix::zeros(3, 3);
                e[(i, j)] = eps;
                let fp = g.frobenius_dot(&s2.kron(&s1.add(&e)));
                let fm = g.frobenius_dot(&s2.kron(&s1.sub(&e)));
                let fd = (fp - fm) / (2.0 * eps);
                assert!((fd - grads.sigma1[(i, j)]).abs() < 1e-6 * fd.abs().max(1.0), "Σ1 ({i},{j})");
                let fp = g.frobenius_dot(&s2.add(&e).kron(&s1));
                let fm = g.frobenius_dot(&s2.sub(&e).kron(&s1));
                let fd = (fp - fm) / (2.0 * eps);
                assert!((fd - grads.sigma2[(i, j)]).abs() < 1e-6 * fd.abs().max(1.0), "Σ2 ({i},{j})");
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = posterior(&mut seeded(4));
        assert!(intrinsic_reward(&p, &[], &[], 0.1).is_err());
        assert!(intrinsic_reward(&p, &[Matrix::zeros(2, 3)], &[zero_sigma(3, 3)], 0.1).is_err());
    }
}
