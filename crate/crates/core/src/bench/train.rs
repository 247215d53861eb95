use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Activation, Batch, FisherMode, MlpArchitecture, WeightSet};
use crate::optim::{gamma_tau_step, Optimizer, StepConfig, StepReport, StepSize, TrustRegionSchedule};
use crate::posterior::{elbo_estimate, Family, GammaPosterior, Hyper, NoiseModel, Posterior};
use crate::rng::stream;

/// How the observation precision τ is handled during training.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TauMode {
    Fixed(f64),
    /// `q(τ)` starts at the prior and takes one natural-gradient step per
    /// minibatch with rate `lr` in (0, 1].
    Learned {
        prior: GammaPosterior,
        lr: f64,
    },
}

/// Every knob of one training run.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub method: Family,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub lambda: f64,
    pub eta: f64,
    pub gamma_ex: f64,
    pub alpha_tilde: f64,
    pub beta_tilde: f64,
    /// Momentum for noisy Adam.
    pub beta1: f64,
    pub t_stats: u64,
    pub t_inv: u64,
    pub epochs: usize,
    /// `None` picks 10 below 2000 training rows and 100 otherwise.
    pub batch_size: Option<usize>,
    pub fisher: FisherMode,
    pub trust_region: Option<TrustRegionSchedule>,
    pub tau: TauMode,
    /// Multiply the step size by 0.1 for the second half of the epochs.
    pub lr_decay: bool,
    /// Weight samples used at evaluation.
    pub eval_samples: usize,
    /// Attach a one-sample minibatch ELBO estimate to every step record. It
    /// draws from its own generator, so training is unaffected.
    #[cfg_attr(feature = "serde", serde(default))]
    pub track_elbo: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Family::Mvg,
            hidden: vec![50],
            activation: Activation::Relu,
            lambda: 1.0,
            eta: 1.0,
            gamma_ex: 0.0,
            alpha_tilde: 0.01,
            beta_tilde: 0.001,
            beta1: 0.9,
            t_stats: 1,
            t_inv: 10,
            epochs: 100,
            batch_size: None,
            fisher: FisherMode::True,
            trust_region: None,
            tau: TauMode::Learned { prior: GammaPosterior::default_prior(), lr: 0.01 },
            lr_decay: true,
            eval_samples: 1000,
            track_elbo: false,
        }
    }
}

const ELBO_STREAM: u64 = 0x656c_626f;

/// Largest network the dense full-covariance family accepts.
pub const MAX_FULL_WEIGHTS: usize = 500;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.eval_samples == 0 {
            return Err(Error::invalid("eval_samples", "must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden", "layer widths must be at least 1"));
        }
        match self.tau {
            TauMode::Fixed(t) if !(t > 0.0 && t.is_finite()) => return Err(Error::invalid("tau", "must be positive")),
            TauMode::Learned { prior, lr } => {
                prior.validate()?;
                if !(lr > 0.0 && lr <= 1.0) {
                    return Err(Error::invalid("tau_lr", "must lie in (0, 1]"));
                }
            }
            _ => {}
        }
        self.step_config()?;
        Hyper::new(self.lambda, 1, self.eta, self.gamma_ex)?;
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::invalid("beta1", "must lie in [0, 1)"));
        }
        if self.t_stats == 0 || self.t_inv == 0 {
            return Err(Error::invalid("t_stats/t_inv", "must be at least 1"));
        }
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize) -> Result<MlpArchitecture> {
        MlpArchitecture::regression(input_dim, &self.hidden, self.activation)
    }

    /// Refuse the dense family on networks it cannot afford.
    pub fn check_size(&self, arch: &MlpArchitecture) -> Result<()> {
        if self.method == Family::Full && arch.num_weights() > MAX_FULL_WEIGHTS {
            return Err(Error::invalid(
                "method",
                alloc::format!(
                    "nng-full keeps a dense covariance over all weights and is limited to {MAX_FULL_WEIGHTS}; \
                     this network has {}",
                    arch.num_weights()
                ),
            ));
        }
        Ok(())
    }

    pub fn batch_size_for(&self, n_train: usize) -> usize {
        self.batch_size.unwrap_or(if n_train < 2000 { 10 } else { 100 }).min(n_train).max(1)
    }

    fn step_config(&self) -> Result<StepConfig> {
        let mut c = StepConfig::new(self.alpha_tilde, self.beta_tilde)?;
        c.fisher = self.fisher;
        if let Some(tr) = self.trust_region {
            c.step_size = StepSize::TrustRegion(tr);
        }
        c.validate()?;
        Ok(c)
    }
}

/// One applied or skipped step, as seen by a training observer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub report: StepReport,
    /// `E_q[τ]` after the step.
    pub tau: f64,
    pub elbo: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainedModel {
    pub arch: MlpArchitecture,
    pub optimizer: Optimizer,
    pub noise: NoiseModel,
}

impl TrainedModel {
    pub fn posterior(&self) -> Posterior {
        self.optimizer.posterior()
    }

    /// Plug-in precision `α/β`, or the fixed τ.
    pub fn tau(&self) -> f64 {
        self.noise.point_tau().unwrap_or(1.0)
    }
}

/// Fit a fresh network to `data` (already normalized).
pub fn train<R: Rng + ?Sized>(
    cfg: &TrainConfig,
    data: &Batch,
    rng: &mut R,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<TrainedModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let arch = cfg.architecture(data.inputs[0].len())?;
    cfg.check_size(&arch)?;
    let n = data.len();
    let hyper = Hyper::new(cfg.lambda, n, cfg.eta, cfg.gamma_ex)?;
    let init = WeightSet::init(&arch, rng);
    let step = cfg.step_config()?;
    let mut opt = Optimizer::new(cfg.method, &init, hyper, step, cfg.beta1, cfg.t_stats, cfg.t_inv)?;
    let mut noise = match cfg.tau {
        TauMode::Fixed(t) => NoiseModel::Fixed(t),
        TauMode::Learned { prior, .. } => NoiseModel::Variational { q: prior, prior },
    };
    let bs = cfg.batch_size_for(n);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        if cfg.lr_decay && epoch == cfg.epochs / 2 && epoch > 0 {
            opt.config_mut().step_size.scale(0.1);
        }
        order.shuffle(rng);
        for chunk in order.chunks(bs) {
            let batch = data.subset(chunk);
            let report = opt.step(&arch, &batch, noise.point_tau(), rng)?;
            if let (NoiseModel::Variational { q, prior }, TauMode::Learned { lr, .. }) = (&mut noise, cfg.tau) {
                if !report.skipped {
                    let w = opt.sample_weights(rng)?;
                    *q = gamma_tau_step(q, prior, &arch, &w, &batch, n, lr)?;
                }
            }
            let elbo = if cfg.track_elbo {
                let mut erng = stream(ELBO_STREAM, report.step);
                Some(elbo_estimate(&arch, &opt.posterior(), &noise, &batch, 1, &mut erng)?)
            } else {
                None
            };
            observer(&StepRecord { epoch, report, tau: noise.point_tau().unwrap_or(1.0), elbo });
        }
        opt.config_mut().step_size.advance_epoch();
    }
    Ok(TrainedModel { arch, optimizer: opt, noise })
}
