//! Self-check suites run by `nng check`: Kronecker solves against dense
//! elimination, the Gaussian gradient-estimator identities, conjugate
//! Bayesian linear regression for every optimizer, and HMC against the same
//! conjugate posterior.

use std::collections::BTreeMap;

use nng_core::linalg::{kron_solve, norm2, standard_normal_vec, KroneckerPair, Matrix, SpdMatrix};
use nng_core::model::{Activation, Batch, FisherMode, MlpArchitecture, WeightSet};
use nng_core::optim::{Optimizer, StepConfig};
use nng_core::oracle::{
    blr_log_density, blr_posterior, check_gaussian_estimators, hmc_sample, BlrPosterior, HmcConfig, Quadratic,
};
use nng_core::posterior::{Family, Hyper, Posterior};
use nng_core::rng::stream;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;

/// One suite's verdict with the numbers it was judged on.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, metrics: impl IntoIterator<Item = (&'static str, f64)>) -> Self {
        let metrics = metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        Self { name: name.into(), passed, metrics }
    }
}

/// Problem sizes for the suites. `fast` trims them for a quick run.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckSizes {
    pub kron_instances: usize,
    pub estimator_problems: usize,
    pub estimator_samples: usize,
    pub hmc: HmcConfig,
}

impl CheckSizes {
    pub fn new(fast: bool, seed: u64) -> Self {
        let hmc =
            HmcConfig { step_size: 0.004, leapfrog_steps: 25, num_samples: 5000, burn_in: 500, num_chains: 4, seed };
        if fast {
            Self {
                kron_instances: 50,
                estimator_problems: 2,
                estimator_samples: 20_000,
                hmc: HmcConfig { num_samples: 2500, ..hmc },
            }
        } else {
            Self { kron_instances: 200, estimator_problems: 5, estimator_samples: 100_000, hmc }
        }
    }
}

/// Every suite in order. Returns the outcomes; the caller decides the exit
/// status.
pub fn run_all(fast: bool, seed: u64) -> Result<Vec<CheckOutcome>> {
    let sizes = CheckSizes::new(fast, seed);
    let problem = BlrProblem::new(seed)?;
    let mut out = vec![
        kron_equivalence(sizes.kron_instances, seed)?,
        estimator_identities(sizes.estimator_problems, sizes.estimator_samples, seed)?,
    ];
    for family in [Family::Full, Family::Mvg, Family::Ffg] {
        out.push(problem.fit(family, seed)?.outcome());
    }
    out.push(hmc_agreement(&problem, &sizes.hmc)?);
    Ok(out)
}

fn random_spd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SpdMatrix {
    let b = Matrix::new(n, n, standard_normal_vec(n * n, rng)).expect("square");
    let mut m = b.matmul(&b.transpose());
    m.add_diagonal(0.5);
    SpdMatrix::new(m).expect("symmetric")
}

/// Gaussian elimination with partial pivoting; the dense route of the
/// Kronecker comparison.
pub fn dense_solve(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).iter().copied().chain([b[i]]).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).expect("nonempty");
        m.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// `kron_solve` against elimination on the expanded product, factor
/// dimensions 1 to 4, relative tolerance 1e-9.
pub fn kron_equivalence(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = stream(seed, 0x6b72);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (n1, n2) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let k = KroneckerPair::new(random_spd(n2, &mut rng), random_spd(n1, &mut rng), 0.5 + rng.random::<f64>());
        let v = Matrix::new(n1, n2, standard_normal_vec(n1 * n2, &mut rng))?;
        let dense = dense_solve(&k.to_dense(), &v.vec());
        let fast = kron_solve(&k, &v)?.vec();
        let diff: Vec<f64> = fast.iter().zip(&dense).map(|(a, b)| a - b).collect();
        worst = worst.max(norm2(&diff) / norm2(&dense));
    }
    Ok(CheckOutcome::new(
        "kron_equivalence",
        worst <= 1e-9,
        [("instances", instances as f64), ("max_rel_error", worst)],
    ))
}

/// Monte-Carlo `E[∇f]` and `½E[∇²f]` against the closed-form gradients of
/// `E[f]` on random 3-d quadratics, within 3 standard errors.
pub fn estimator_identities(problems: usize, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = stream(seed, 0x6573);
    let mut passed = 0usize;
    let mut factor_one_passes = 0usize;
    for _ in 0..problems {
        let h = Matrix::new(3, 3, standard_normal_vec(9, &mut rng))?;
        let f = Quadratic::new(h, standard_normal_vec(3, &mut rng))?;
        let mu = standard_normal_vec(3, &mut rng);
        let sigma = random_spd(3, &mut rng);
        let r = check_gaussian_estimators(&f, &mu, &sigma, samples, &mut rng)?;
        passed += usize::from(r.passes(3.0));
        factor_one_passes += usize::from(r.sigma_passes(1.0, 3.0));
    }
    Ok(CheckOutcome::new(
        "estimator_identities",
        passed == problems && factor_one_passes == 0,
        [
            ("problems", problems as f64),
            ("samples", samples as f64),
            ("passed", passed as f64),
            ("unhalved_hessian_passed", factor_one_passes as f64),
        ],
    ))
}

/// Bayesian linear regression with a known noise precision: 5 features plus
/// a bias column, 100 rows, η = 1.
#[derive(Clone, Debug)]
pub struct BlrProblem {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// Design matrix with the trailing ones column.
    pub design: Matrix,
    pub tau: f64,
    pub eta: f64,
    pub exact: BlrPosterior,
}

/// Result of running one optimizer on the conjugate problem.
#[derive(Clone, Debug)]
pub struct BlrFit {
    pub family: Family,
    pub steps: u64,
    pub mean_rel_error: f64,
    /// Full-covariance family only.
    pub cov_rel_error: Option<f64>,
}

pub const BLR_MEAN_TOL: f64 = 1e-3;
pub const BLR_COV_TOL: f64 = 1e-2;

/// Step-size phases: each pair is (α̃, steps). Shrinking α̃ shrinks the
/// stationary spread of the mean around its fixed point.
pub const BLR_PHASES: &[(f64, usize)] = &[(0.1, 300), (0.01, 1000), (0.001, 4000), (0.0001, 40_000)];
pub const BLR_BETA_TILDE: f64 = 0.0002;

impl BlrProblem {
    pub fn new(seed: u64) -> Result<Self> {
        let (n, d, tau, eta) = (100, 5, 25.0, 1.0);
        let mut rng = stream(seed, 0x626c72);
        let w_true = standard_normal_vec(d + 1, &mut rng);
        let features: Vec<Vec<f64>> = (0..n).map(|_| standard_normal_vec(d, &mut rng)).collect();
        let design = Matrix::from_fn(n, d + 1, |i, j| if j < d { features[i][j] } else { 1.0 });
        let targets: Vec<f64> =
            design.mul_vec(&w_true).iter().map(|m| m + rng.sample::<f64, _>(StandardNormal) / f64::sqrt(tau)).collect();
        let exact = blr_posterior(&design, &targets, eta, tau)?;
        Ok(Self { features, targets, design, tau, eta, exact })
    }

    pub fn arch(&self) -> Result<MlpArchitecture> {
        Ok(MlpArchitecture::regression(self.features[0].len(), &[], Activation::Relu)?)
    }

    /// Full-batch noisy natural-gradient steps at fixed τ through
    /// [`BLR_PHASES`], then compare against the exact posterior.
    pub fn fit(&self, family: Family, seed: u64) -> Result<BlrFit> {
        let arch = self.arch()?;
        let batch = Batch::regression(self.features.clone(), &self.targets)?;
        let hyper = Hyper::new(1.0, self.targets.len(), self.eta, 0.0)?;
        let mut config = StepConfig::new(BLR_PHASES[0].0, BLR_BETA_TILDE)?;
        config.fisher = FisherMode::True;
        let mut opt = Optimizer::new(family, &WeightSet::zeros(&arch), hyper, config, 0.9, 1, 10)?;
        let mut rng = stream(seed, 0x6669 + family as u64);
        for &(alpha, steps) in BLR_PHASES {
            opt.config_mut().step_size = nng_core::optim::StepSize::Fixed(alpha);
            for _ in 0..steps {
                opt.step(&arch, &batch, Some(self.tau), &mut rng)?;
            }
        }
        let post = opt.posterior();
        let mean = post.mean_weights().flatten();
        let diff: Vec<f64> = mean.iter().zip(&self.exact.mean).map(|(a, b)| a - b).collect();
        let cov_rel_error = match &post {
            Posterior::Full(p) => {
                let cov = p.covariance()?;
                let exact = self.exact.covariance.matrix();
                Some(cov.sub(exact).frobenius_norm() / exact.frobenius_norm())
            }
            _ => None,
        };
        Ok(BlrFit { family, steps: opt.steps(), mean_rel_error: norm2(&diff) / norm2(&self.exact.mean), cov_rel_error })
    }
}

impl BlrFit {
    pub fn passed(&self) -> bool {
        self.mean_rel_error <= BLR_MEAN_TOL && self.cov_rel_error.is_none_or(|e| e <= BLR_COV_TOL)
    }

    pub fn outcome(&self) -> CheckOutcome {
        let mut m = vec![("steps", self.steps as f64), ("mean_rel_error", self.mean_rel_error)];
        if let Some(c) = self.cov_rel_error {
            m.push(("cov_rel_error", c));
        }
        CheckOutcome::new(format!("blr_{}", self.family.name()), self.passed(), m)
    }
}

/// Sample mean and covariance (unbiased) of a set of draws.
pub fn sample_moments(samples: &[Vec<f64>]) -> (Vec<f64>, Matrix) {
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for s in samples {
        let c: Vec<f64> = s.iter().zip(&mean).map(|(a, b)| a - b).collect();
        cov.add_scaled(&Matrix::outer(&c, &c), 1.0 / (n - 1.0));
    }
    (mean, cov)
}

/// HMC on the conjugate posterior: mean and covariance within 5% relative
/// (Euclidean and Frobenius) of the exact moments.
pub fn hmc_agreement(problem: &BlrProblem, cfg: &HmcConfig) -> Result<CheckOutcome> {
    let d = problem.design.cols();
    let r = hmc_sample(
        |w| blr_log_density(&problem.design, &problem.targets, problem.eta, problem.tau, w),
        &vec![0.0; d],
        cfg,
    )?;
    let (mean, cov) = sample_moments(&r.samples);
    let diff: Vec<f64> = mean.iter().zip(&problem.exact.mean).map(|(a, b)| a - b).collect();
    let mean_err = norm2(&diff) / norm2(&problem.exact.mean);
    let exact_cov = problem.exact.covariance.matrix();
    let cov_err = cov.sub(exact_cov).frobenius_norm() / exact_cov.frobenius_norm();
    let acc = r.min_acceptance();
    Ok(CheckOutcome::new(
        "hmc_vs_blr",
        mean_err <= 0.05 && cov_err <= 0.05 && acc >= 0.1,
        [
            ("mean_rel_error", mean_err),
            ("cov_rel_error", cov_err),
            ("min_acceptance", acc),
            ("samples", r.samples.len() as f64),
        ],
    ))
}
