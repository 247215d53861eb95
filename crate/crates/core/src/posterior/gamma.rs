use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma};
#[allow(unused_imports)]
use num_traits::Float;

/// `Gamma(alpha, beta)` in the shape/rate parameterization.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GammaPosterior {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaPosterior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let g = Self { alpha, beta };
        g.validate()?;
        Ok(g)
    }

    /// The `Gamma(6, 6)` prior on the noise precision.
    pub fn default_prior() -> Self {
        Self { alpha: 6.0, beta: 6.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("gamma alpha", "must be positive and finite"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("gamma beta", "must be positive and finite"));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.alpha / self.beta
    }

    /// `E[log τ]`
    pub fn expected_log(&self) -> f64 {
        digamma(self.alpha) - self.beta.ln()
    }
}

/// `KL(q ‖ p)` between two Gamma distributions.
pub fn gamma_kl(q: &GammaPosterior, p: &GammaPosterior) -> Result<f64> {
    q.validate()?;
    p.validate()?;
    let kl = (q.alpha - p.alpha) * digamma(q.alpha) - ln_gamma(q.alpha)
        + ln_gamma(p.alpha)
        + p.alpha * (q.beta.ln() - p.beta.ln())
        + q.alpha * (p.beta - q.beta) / q.beta;
    Ok(kl.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_density(g: &GammaPosterior, x: f64) -> f64 {
        g.alpha * g.beta.ln() - ln_gamma(g.alpha) + (g.alpha - 1.0) * x.ln() - g.beta * x
    }

    /// Simpson's rule on a log-spaced grid, `x = e^u`.
    fn quadrature_kl(q: &GammaPosterior, p: &GammaPosterior) -> f64 {
        let (lo, hi, n) = (-30.0f64, 8.0f64, 40_000usize);
        let h = (hi - lo) / n as f64;
        let f = |u: f64| {
            let x = u.exp();
            let lq = log_density(q, x);
            lq.exp() * (lq - log_density(p, x)) * x
        };
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let u = lo + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(u);
        }
        s * h / 3.0
    }

    #[test]
    fn kl_zero_at_equality() {
        let p = GammaPosterior::default_prior();
        assert_eq!(gamma_kl(&p, &p).unwrap(), 0.0);
        let q = GammaPosterior::new(2.5, 0.7).unwrap();
        assert!(gamma_kl(&q, &q).unwrap().abs() < 1e-14);
    }

    #[test]
    fn kl_matches_quadrature() {
        let pairs =
            [((2.0, 3.0), (6.0, 6.0)), ((6.0, 1.5), (1.5, 2.0)), ((10.0, 4.0), (6.0, 6.0)), ((3.3, 0.8), (2.2, 1.1))];
        for ((qa, qb), (pa, pb)) in pairs {
            let q = GammaPosterior::new(qa, qb).unwrap();
            let p = GammaPosterior::new(pa, pb).unwrap();
            let exact = gamma_kl(&q, &p).unwrap();
            let quad = quadrature_kl(&q, &p);
            assert!(exact >= 0.0);
            assert!((exact - quad).abs() < 1e-6, "{exact} vs {quad}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GammaPosterior::new(0.0, 1.0).is_err());
        assert!(GammaPosterior::new(1.0, -1.0).is_err());
        assert!(gamma_kl(&GammaPosterior { alpha: 1.0, beta: f64::NAN }, &GammaPosterior::default_prior()).is_err());
    }
}
