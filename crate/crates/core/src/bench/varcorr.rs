use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::RngCore;

use super::{
    pearson, predict_samples, predictive_variances, split_seed, train, Dataset, Normalizer, Summary, TrainConfig,
};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{backward_g, forward_unchecked, predict, Batch, MlpArchitecture, Target, WeightSet};
use crate::oracle::{hmc_sample, HmcConfig};
use crate::posterior::{Family, GammaPosterior};
use crate::rng::stream;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum VarcorrMethod {
    Nng(Family),
    /// A second HMC run with its own seed.
    Hmc,
}

impl VarcorrMethod {
    pub fn name(&self) -> &'static str {
        match self {
            VarcorrMethod::Nng(f) => f.name(),
            VarcorrMethod::Hmc => "hmc",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VarcorrConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub trials: usize,
    pub methods: Vec<VarcorrMethod>,
    /// The seed field is ignored; each run derives its own.
    pub hmc: HmcConfig,
    /// HMC samples are thinned evenly to at most this many for prediction.
    pub hmc_eval_samples: usize,
    pub prior_tau: GammaPosterior,
}

impl Default for VarcorrConfig {
    fn default() -> Self {
        Self {
            n_train: 20,
            n_test: 100,
            trials: 10,
            methods: alloc::vec![VarcorrMethod::Nng(Family::Ffg), VarcorrMethod::Nng(Family::Mvg)],
            hmc: HmcConfig {
                step_size: 0.01,
                leapfrog_steps: 30,
                num_samples: 4000,
                burn_in: 1000,
                num_chains: 4,
                seed: 0,
            },
            hmc_eval_samples: 1000,
            prior_tau: GammaPosterior::default_prior(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VarcorrTrial {
    pub index: usize,
    pub seed: u64,
    /// Pearson correlation with the reference HMC run, one per method.
    pub correlations: Vec<f64>,
    pub hmc_acceptance: f64,
    /// The reference chains accepted fewer than 10% of proposals.
    pub hmc_flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VarcorrOutcome {
    pub methods: Vec<VarcorrMethod>,
    pub trials: Vec<VarcorrTrial>,
    pub summaries: Vec<Summary>,
    pub medians: Vec<f64>,
}

impl VarcorrOutcome {
    pub fn from_trials(methods: Vec<VarcorrMethod>, mut trials: Vec<VarcorrTrial>) -> Result<Self> {
        trials.sort_by_key(|t| t.index);
        let mut summaries = Vec::new();
        let mut medians = Vec::new();
        for m in 0..methods.len() {
            let v: Vec<f64> = trials.iter().map(|t| t.correlations[m]).collect();
            summaries.push(Summary::of(&v)?);
            medians.push(Summary::median(&v)?);
        }
        Ok(Self { methods, trials, summaries, medians })
    }
}

/// Log joint density of `(w, ln τ)` for a regression network with prior
/// `w ~ N(0, ηI)` and `τ ~ Gamma(a₀, b₀)`, including the log-Jacobian of
/// the `ln τ` coordinate. The last coordinate is `ln τ`.
pub fn mlp_log_joint<'a>(
    arch: &'a MlpArchitecture,
    data: &'a Batch,
    eta: f64,
    prior: GammaPosterior,
) -> impl FnMut(&[f64]) -> (f64, Vec<f64>) + 'a {
    let shapes = arch.layer_shapes();
    move |theta: &[f64]| {
        let nw = theta.len() - 1;
        let (wf, log_tau) = (&theta[..nw], theta[nw]);
        let tau = log_tau.exp();
        let w = WeightSet::from_flat(&shapes, wf).expect("parameter length matches the architecture");
        let mut grads: Vec<crate::linalg::Matrix> =
            shapes.iter().map(|&(r, c)| crate::linalg::Matrix::zeros(r, c)).collect();
        let mut sq = 0.0;
        for (x, y) in data.inputs.iter().zip(&data.targets) {
            let Target::Real(yv) = y else { unreachable!("regression batch") };
            let trace = forward_unchecked(arch, &w, x);
            let r = yv[0] - trace.output[0];
            sq += r * r;
            let g = backward_g(arch, &w, &trace, &[tau * r]);
            for ((gm, a), gl) in grads.iter_mut().zip(&trace.inputs).zip(&g) {
                for (i, ai) in a.iter().enumerate() {
                    for (j, gj) in gl.iter().enumerate() {
                        gm[(i, j)] += ai * gj;
                    }
                }
            }
        }
        let n = data.len() as f64;
        let value = 0.5 * n * (log_tau - (2.0 * core::f64::consts::PI).ln()) - 0.5 * tau * sq - 0.5 * dot(wf, wf) / eta
            + prior.alpha * log_tau
            - prior.beta * tau;
        let mut grad: Vec<f64> = grads.iter().flat_map(|m| m.vec()).collect();
        for (g, wi) in grad.iter_mut().zip(wf) {
            *g -= wi / eta;
        }
        grad.push(0.5 * n - 0.5 * tau * sq + prior.alpha - prior.beta * tau);
        if !value.is_finite() {
            return (f64::NEG_INFINITY, grad);
        }
        (value, grad)
    }
}

/// Epistemic predictive variances from HMC samples of `(w, ln τ)`, thinned
/// evenly to at most `max_samples`.
pub fn hmc_predictive_variances(
    arch: &MlpArchitecture,
    samples: &[Vec<f64>],
    xs: &[Vec<f64>],
    max_samples: usize,
) -> Result<Vec<f64>> {
    let shapes = arch.layer_shapes();
    let stride = samples.len().div_ceil(max_samples.max(1)).max(1);
    let preds: Vec<Vec<f64>> = samples
        .iter()
        .step_by(stride)
        .map(|th| {
            let w = WeightSet::from_flat(&shapes, &th[..th.len() - 1])?;
            Ok(xs.iter().map(|x| predict(arch, &w, x)[0]).collect())
        })
        .collect::<Result<_>>()?;
    predictive_variances(&preds)
}

fn run_hmc(
    arch: &MlpArchitecture,
    batch: &Batch,
    cfg: &TrainConfig,
    vcfg: &VarcorrConfig,
    test_x: &[Vec<f64>],
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let mut init = WeightSet::init(arch, &mut stream(seed, u64::MAX)).flatten();
    init.push(0.0);
    let hcfg = HmcConfig { seed, ..vcfg.hmc };
    let r = hmc_sample(mlp_log_joint(arch, batch, cfg.eta, vcfg.prior_tau), &init, &hcfg)?;
    Ok((hmc_predictive_variances(arch, &r.samples, test_x, vcfg.hmc_eval_samples)?, r.min_acceptance()))
}

/// One trial: draw `n_train + n_test` rows, run the reference HMC, then each
/// method, and correlate predictive variances on the test rows.
pub fn variance_correlation_trial(
    data: &Dataset,
    cfg: &TrainConfig,
    vcfg: &VarcorrConfig,
    seed: u64,
    index: usize,
) -> Result<VarcorrTrial> {
    if data.len() < vcfg.n_train + vcfg.n_test {
        return Err(Error::invalid("dataset", "fewer rows than the train and test sets need"));
    }
    let tseed = split_seed(seed, index);
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut stream(tseed, 0));
    let train_idx = &idx[..vcfg.n_train];
    let test_idx = &idx[vcfg.n_train..vcfg.n_train + vcfg.n_test];
    let norm = Normalizer::fit(data, train_idx)?;
    let batch = norm.batch(data, train_idx)?;
    let test_x: Vec<Vec<f64>> = test_idx.iter().map(|&i| norm.features(&data.features[i])).collect();
    let arch = cfg.architecture(data.num_features())?;

    let (reference, acceptance) = run_hmc(&arch, &batch, cfg, vcfg, &test_x, stream(tseed, 1).next_u64())?;
    let mut correlations = Vec::with_capacity(vcfg.methods.len());
    for (k, m) in vcfg.methods.iter().enumerate() {
        let mseed = stream(tseed, 2 + k as u64).next_u64();
        let v = match m {
            VarcorrMethod::Hmc => run_hmc(&arch, &batch, cfg, vcfg, &test_x, mseed)?.0,
            VarcorrMethod::Nng(family) => {
                let c = TrainConfig { method: *family, ..cfg.clone() };
                let mut rng = stream(mseed, 0);
                let model = train(&c, &batch, &mut rng, &mut |_| {})?;
                let s = predict_samples(&model.arch, &model.posterior(), &test_x, c.eval_samples.max(2), &mut rng)?;
                predictive_variances(&s)?
            }
        };
        correlations.push(pearson(&v, &reference)?);
    }
    Ok(VarcorrTrial { index, seed: tseed, correlations, hmc_acceptance: acceptance, hmc_flagged: acceptance < 0.1 })
}

pub fn variance_correlation_run(
    data: &Dataset,
    cfg: &TrainConfig,
    vcfg: &VarcorrConfig,
    seed: u64,
) -> Result<VarcorrOutcome> {
    let trials =
        (0..vcfg.trials).map(|t| variance_correlation_trial(data, cfg, vcfg, seed, t)).collect::<Result<Vec<_>>>()?;
    VarcorrOutcome::from_trials(vcfg.methods.clone(), trials)
}
