//! Run configuration: built-in defaults, flat `key = value` files and
//! command-line overrides, applied in that order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nng_core::bench::{Acquisition, ActiveConfig, SplitSpec, TauMode, TrainConfig, VarcorrConfig, VarcorrMethod};
use nng_core::model::{Activation, FisherMode};
use nng_core::optim::TrustRegionSchedule;
use nng_core::oracle::HmcConfig;
use nng_core::posterior::{Family, GammaPosterior};

use crate::error::{CliError, Result};

/// Environment variable naming a directory whose `default.conf` is read
/// before any `--config` file.
pub const CONFIG_DIR_ENV: &str = "NNG_CONFIG_DIR";

/// Initial trust-region budget used by `train` unless overridden. Without a
/// budget the first epochs on real data can push the noise precision to
/// zero before the curvature estimate settles.
pub const DEFAULT_TR_C0: f64 = 0.01;

/// Training epochs for each method in the variance-correlation protocol.
pub const VARCORR_EPOCHS: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Eval,
    Active,
    Varcorr,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Active => "active",
            Command::Varcorr => "varcorr",
            Command::Check => "check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "train" => Command::Train,
            "eval" => Command::Eval,
            "active" => Command::Active,
            "varcorr" => Command::Varcorr,
            "check" => Command::Check,
            _ => return None,
        })
    }
}

/// Every configurable key with a one-line description. File keys use
/// underscores; command-line flags use the same names with hyphens.
pub const KEYS: &[(&str, &str)] = &[
    ("dataset", "CSV file, last column is the target"),
    ("output", "write the JSON result here instead of stdout"),
    ("checkpoint_dir", "directory for per-split posterior checkpoints (train)"),
    ("checkpoint", "checkpoint to evaluate (eval)"),
    ("step_log", "line-delimited JSON step log"),
    ("table", "also write a CSV summary table here"),
    ("method", "nng-ffg, nng-mvg or nng-full"),
    ("hidden", "hidden layer widths, comma separated"),
    ("activation", "relu or tanh"),
    ("lambda", "KL weight"),
    ("eta", "prior variance"),
    ("gamma_ex", "extrinsic damping"),
    ("alpha_tilde", "mean step size"),
    ("beta_tilde", "Fisher moving-average rate"),
    ("beta1", "noisy Adam momentum"),
    ("beta2", "noisy Adam Fisher decay, overrides beta_tilde as 1 - beta2"),
    ("t_stats", "K-FAC statistics interval"),
    ("t_inv", "K-FAC inverse interval"),
    ("epochs", "training epochs"),
    ("batch", "minibatch size or auto"),
    ("samples", "weight samples at evaluation"),
    ("seed", "master seed"),
    ("fisher", "true or empirical"),
    ("tr_c0", "trust-region initial budget, or none"),
    ("tr_zeta", "trust-region budget decay per epoch"),
    ("tr_alpha_max", "trust-region step cap"),
    ("tau", "learned, or a fixed noise precision"),
    ("tau_a0", "Gamma prior shape on tau"),
    ("tau_b0", "Gamma prior rate on tau"),
    ("tau_lr", "tau natural-gradient rate in (0, 1]"),
    ("lr_decay", "scale the step size by 0.1 for the second half"),
    ("splits", "train/test split repeats"),
    ("train_fraction", "training share of each split"),
    ("workers", "parallel splits or trials"),
    ("n_train", "initial labelled rows (active, varcorr)"),
    ("n_test", "test rows (active, varcorr)"),
    ("rounds", "acquisitions (active)"),
    ("acquisition", "variance or random (active)"),
    ("methods", "comma separated methods (varcorr): nng-ffg, nng-mvg, nng-full, hmc"),
    ("trials", "independent trials (varcorr)"),
    ("synthetic_rows", "rows of the built-in 1-d task when no dataset is given (varcorr, active)"),
    ("hmc_step_size", "leapfrog step size"),
    ("hmc_leapfrog", "leapfrog steps per proposal"),
    ("hmc_samples", "kept samples per chain"),
    ("hmc_burn_in", "discarded samples per chain"),
    ("hmc_chains", "chains"),
    ("hmc_eval_samples", "HMC samples used for prediction"),
    ("fast", "reduced check sizes"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub step_log: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub method: Family,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub lambda: f64,
    pub eta: f64,
    pub gamma_ex: f64,
    pub alpha_tilde: f64,
    pub beta_tilde: f64,
    pub beta1: f64,
    pub beta2: Option<f64>,
    pub t_stats: u64,
    pub t_inv: u64,
    pub epochs: usize,
    pub batch: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    pub fisher: FisherMode,
    pub tr_c0: Option<f64>,
    pub tr_zeta: f64,
    pub tr_alpha_max: f64,
    pub tau: Option<f64>,
    pub tau_a0: f64,
    pub tau_b0: f64,
    pub tau_lr: f64,
    pub lr_decay: bool,
    pub splits: usize,
    pub train_fraction: f64,
    pub workers: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub rounds: usize,
    pub acquisition: Acquisition,
    pub methods: Vec<VarcorrMethod>,
    pub trials: usize,
    pub synthetic_rows: usize,
    pub hmc_step_size: f64,
    pub hmc_leapfrog: usize,
    pub hmc_samples: usize,
    pub hmc_burn_in: usize,
    pub hmc_chains: usize,
    pub hmc_eval_samples: usize,
    pub fast: bool,
}

impl RunConfig {
    /// Built-in defaults for `command`.
    pub fn defaults(command: Command) -> Self {
        let t = TrainConfig::default();
        let a = ActiveConfig::default();
        let v = VarcorrConfig::default();
        let mut c = Self {
            command,
            dataset: None,
            output: None,
            checkpoint_dir: None,
            checkpoint: None,
            step_log: None,
            table: None,
            method: t.method,
            hidden: t.hidden,
            activation: t.activation,
            lambda: t.lambda,
            eta: t.eta,
            gamma_ex: t.gamma_ex,
            alpha_tilde: t.alpha_tilde,
            beta_tilde: t.beta_tilde,
            beta1: t.beta1,
            beta2: None,
            t_stats: t.t_stats,
            t_inv: t.t_inv,
            epochs: t.epochs,
            batch: t.batch_size,
            samples: t.eval_samples,
            seed: 0,
            fisher: t.fisher,
            tr_c0: t.trust_region.map(|s| s.c0),
            tr_zeta: t.trust_region.map_or(1.0, |s| s.zeta),
            tr_alpha_max: t.trust_region.map_or(0.01, |s| s.alpha_max),
            tau: None,
            tau_a0: 6.0,
            tau_b0: 6.0,
            tau_lr: match t.tau {
                TauMode::Learned { lr, .. } => lr,
                TauMode::Fixed(_) => 0.01,
            },
            lr_decay: t.lr_decay,
            splits: SplitSpec::default().repeats,
            train_fraction: SplitSpec::default().train_fraction,
            workers: 1,
            n_train: a.n_train,
            n_test: a.n_test,
            rounds: a.rounds,
            acquisition: a.acquisition,
            methods: v.methods,
            trials: v.trials,
            synthetic_rows: 1000,
            hmc_step_size: v.hmc.step_size,
            hmc_leapfrog: v.hmc.leapfrog_steps,
            hmc_samples: v.hmc.num_samples,
            hmc_burn_in: v.hmc.burn_in,
            hmc_chains: v.hmc.num_chains,
            hmc_eval_samples: v.hmc_eval_samples,
            fast: false,
        };
        match command {
            Command::Active | Command::Varcorr => {
                c.hidden = vec![10];
                c.beta_tilde = 0.01;
                if command == Command::Varcorr {
                    c.epochs = VARCORR_EPOCHS;
                }
            }
            Command::Train | Command::Eval => {
                c.tr_c0 = Some(DEFAULT_TR_C0);
            }
            Command::Check => {}
        }
        c
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "dataset" => self.dataset = opt_path(v),
            "output" => self.output = opt_path(v),
            "checkpoint_dir" => self.checkpoint_dir = opt_path(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "step_log" => self.step_log = opt_path(v),
            "table" => self.table = opt_path(v),
            "method" => self.method = parse_family(v)?,
            "hidden" => self.hidden = parse_list(key, v, |s| s.parse::<usize>().ok())?,
            "activation" => {
                self.activation = match v {
                    "relu" => Activation::Relu,
                    "tanh" => Activation::Tanh,
                    _ => return Err(bad(key, v, "relu or tanh")),
                }
            }
            "lambda" => self.lambda = num(key, v)?,
            "eta" => self.eta = num(key, v)?,
            "gamma_ex" => self.gamma_ex = num(key, v)?,
            "alpha_tilde" => self.alpha_tilde = num(key, v)?,
            "beta_tilde" => self.beta_tilde = num(key, v)?,
            "beta1" => self.beta1 = num(key, v)?,
            "beta2" => self.beta2 = if v == "none" { None } else { Some(num(key, v)?) },
            "t_stats" => self.t_stats = num(key, v)?,
            "t_inv" => self.t_inv = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch" => self.batch = if v == "auto" { None } else { Some(num(key, v)?) },
            "samples" => self.samples = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "fisher" => {
                self.fisher = match v {
                    "true" => FisherMode::True,
                    "empirical" => FisherMode::Empirical,
                    _ => return Err(bad(key, v, "true or empirical")),
                }
            }
            "tr_c0" => self.tr_c0 = if v == "none" { None } else { Some(num(key, v)?) },
            "tr_zeta" => self.tr_zeta = num(key, v)?,
            "tr_alpha_max" => self.tr_alpha_max = num(key, v)?,
            "tau" => self.tau = if v == "learned" { None } else { Some(num(key, v)?) },
            "tau_a0" => self.tau_a0 = num(key, v)?,
            "tau_b0" => self.tau_b0 = num(key, v)?,
            "tau_lr" => self.tau_lr = num(key, v)?,
            "lr_decay" => self.lr_decay = boolean(key, v)?,
            "splits" => self.splits = num(key, v)?,
            "train_fraction" => self.train_fraction = num(key, v)?,
            "workers" => self.workers = num(key, v)?,
            "n_train" => self.n_train = num(key, v)?,
            "n_test" => self.n_test = num(key, v)?,
            "rounds" => self.rounds = num(key, v)?,
            "acquisition" => {
                self.acquisition = match v {
                    "variance" => Acquisition::Variance,
                    "random" => Acquisition::Random,
                    _ => return Err(bad(key, v, "variance or random")),
                }
            }
            "methods" => {
                self.methods = parse_list(key, v, |s| match s {
                    "hmc" => Some(VarcorrMethod::Hmc),
                    other => parse_family(other).ok().map(VarcorrMethod::Nng),
                })?
            }
            "trials" => self.trials = num(key, v)?,
            "synthetic_rows" => self.synthetic_rows = num(key, v)?,
            "hmc_step_size" => self.hmc_step_size = num(key, v)?,
            "hmc_leapfrog" => self.hmc_leapfrog = num(key, v)?,
            "hmc_samples" => self.hmc_samples = num(key, v)?,
            "hmc_burn_in" => self.hmc_burn_in = num(key, v)?,
            "hmc_chains" => self.hmc_chains = num(key, v)?,
            "hmc_eval_samples" => self.hmc_eval_samples = num(key, v)?,
            "fast" => self.fast = boolean(key, v)?,
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in the same syntax `set` accepts.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string());
        let opt = |o: Option<f64>, none: &str| o.map_or_else(|| none.to_string(), |x| x.to_string());
        let join = |v: Vec<String>| v.join(",");
        let mut m = BTreeMap::new();
        m.insert("dataset", path(&self.dataset));
        m.insert("output", path(&self.output));
        m.insert("checkpoint_dir", path(&self.checkpoint_dir));
        m.insert("checkpoint", path(&self.checkpoint));
        m.insert("step_log", path(&self.step_log));
        m.insert("table", path(&self.table));
        m.insert("method", self.method.name().to_string());
        m.insert("hidden", join(self.hidden.iter().map(|h| h.to_string()).collect()));
        m.insert(
            "activation",
            match self.activation {
                Activation::Relu => "relu",
                Activation::Tanh => "tanh",
            }
            .to_string(),
        );
        m.insert("lambda", self.lambda.to_string());
        m.insert("eta", self.eta.to_string());
        m.insert("gamma_ex", self.gamma_ex.to_string());
        m.insert("alpha_tilde", self.alpha_tilde.to_string());
        m.insert("beta_tilde", self.beta_tilde.to_string());
        m.insert("beta1", self.beta1.to_string());
        m.insert("beta2", opt(self.beta2, "none"));
        m.insert("t_stats", self.t_stats.to_string());
        m.insert("t_inv", self.t_inv.to_string());
        m.insert("epochs", self.epochs.to_string());
        m.insert("batch", self.batch.map_or_else(|| "auto".to_string(), |b| b.to_string()));
        m.insert("samples", self.samples.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert(
            "fisher",
            match self.fisher {
                FisherMode::True => "true",
                FisherMode::Empirical => "empirical",
            }
            .to_string(),
        );
        m.insert("tr_c0", opt(self.tr_c0, "none"));
        m.insert("tr_zeta", self.tr_zeta.to_string());
        m.insert("tr_alpha_max", self.tr_alpha_max.to_string());
        m.insert("tau", opt(self.tau, "learned"));
        m.insert("tau_a0", self.tau_a0.to_string());
        m.insert("tau_b0", self.tau_b0.to_string());
        m.insert("tau_lr", self.tau_lr.to_string());
        m.insert("lr_decay", self.lr_decay.to_string());
        m.insert("splits", self.splits.to_string());
        m.insert("train_fraction", self.train_fraction.to_string());
        m.insert("workers", self.workers.to_string());
        m.insert("n_train", self.n_train.to_string());
        m.insert("n_test", self.n_test.to_string());
        m.insert("rounds", self.rounds.to_string());
        m.insert(
            "acquisition",
            match self.acquisition {
                Acquisition::Variance => "variance",
                Acquisition::Random => "random",
            }
            .to_string(),
        );
        m.insert("methods", join(self.methods.iter().map(|m| m.name().to_string()).collect()));
        m.insert("trials", self.trials.to_string());
        m.insert("synthetic_rows", self.synthetic_rows.to_string());
        m.insert("hmc_step_size", self.hmc_step_size.to_string());
        m.insert("hmc_leapfrog", self.hmc_leapfrog.to_string());
        m.insert("hmc_samples", self.hmc_samples.to_string());
        m.insert("hmc_burn_in", self.hmc_burn_in.to_string());
        m.insert("hmc_chains", self.hmc_chains.to_string());
        m.insert("hmc_eval_samples", self.hmc_eval_samples.to_string());
        m.insert("fast", self.fast.to_string());
        m
    }

    /// Defaults for `command`, then `$NNG_CONFIG_DIR/default.conf` when it
    /// exists, then `config_file`, then `overrides` in order. The result is
    /// validated.
    pub fn resolve(command: Command, config_file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut c = Self::defaults(command);
        if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
            let p = Path::new(&dir).join("default.conf");
            if p.is_file() {
                c.apply_file(&p)?;
            }
        }
        if let Some(f) = config_file {
            c.apply_file(f)?;
        }
        for (k, v) in overrides {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Apply a flat config file: `key = value` per line, `#` comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("config {}", path.display()), e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_text(&mut self, text: &str, name: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("{name}: line {}: expected key = value", i + 1)));
            };
            self.set(k.trim(), v).map_err(|e| CliError::Config(format!("{name}: line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Validate every field the command uses before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.train_config()?.validate()?;
        self.split_spec().validate()?;
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if let Some(b2) = self.beta2 {
            if !(0.0..1.0).contains(&b2) {
                return Err(CliError::Config("beta2 must lie in [0, 1)".into()));
            }
        }
        match self.command {
            Command::Train => {
                self.require_dataset()?;
            }
            Command::Eval => {
                self.require_dataset()?;
                if self.checkpoint.is_none() {
                    return Err(CliError::Config("eval needs a checkpoint".into()));
                }
            }
            Command::Varcorr => {
                if self.methods.is_empty() {
                    return Err(CliError::Config("methods must name at least one method".into()));
                }
                if self.trials == 0 {
                    return Err(CliError::Config("trials must be at least 1".into()));
                }
                self.hmc_config(0).validate()?;
                if self.hmc_eval_samples < 2 {
                    return Err(CliError::Config("hmc_eval_samples must be at least 2".into()));
                }
                if self.samples < 2 {
                    return Err(CliError::Config("samples must be at least 2 for predictive variances".into()));
                }
            }
            Command::Active => {
                if self.samples < 2 {
                    return Err(CliError::Config("samples must be at least 2 for predictive variances".into()));
                }
            }
            Command::Check => {}
        }
        Ok(())
    }

    fn require_dataset(&self) -> Result<()> {
        if self.dataset.is_none() {
            return Err(CliError::Config(format!("{} needs a dataset", self.command.name())));
        }
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let trust_region = match self.tr_c0 {
            Some(c0) => Some(TrustRegionSchedule::new(c0, self.tr_zeta, self.tr_alpha_max)?),
            None => None,
        };
        let tau = match self.tau {
            Some(t) => TauMode::Fixed(t),
            None => TauMode::Learned { prior: GammaPosterior::new(self.tau_a0, self.tau_b0)?, lr: self.tau_lr },
        };
        let beta_tilde = match (self.method, self.beta2) {
            (Family::Ffg, Some(b2)) => 1.0 - b2,
            _ => self.beta_tilde,
        };
        Ok(TrainConfig {
            method: self.method,
            hidden: self.hidden.clone(),
            activation: self.activation,
            lambda: self.lambda,
            eta: self.eta,
            gamma_ex: self.gamma_ex,
            alpha_tilde: self.alpha_tilde,
            beta_tilde,
            beta1: self.beta1,
            t_stats: self.t_stats,
            t_inv: self.t_inv,
            epochs: self.epochs,
            batch_size: self.batch,
            fisher: self.fisher,
            trust_region,
            tau,
            lr_decay: self.lr_decay,
            eval_samples: self.samples,
            track_elbo: self.step_log.is_some(),
        })
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.train_fraction, repeats: self.splits, seed: self.seed }
    }

    pub fn active_config(&self) -> ActiveConfig {
        ActiveConfig { n_train: self.n_train, n_test: self.n_test, rounds: self.rounds, acquisition: self.acquisition }
    }

    pub fn hmc_config(&self, seed: u64) -> HmcConfig {
        HmcConfig {
            step_size: self.hmc_step_size,
            leapfrog_steps: self.hmc_leapfrog,
            num_samples: self.hmc_samples,
            burn_in: self.hmc_burn_in,
            num_chains: self.hmc_chains,
            seed,
        }
    }

    pub fn varcorr_config(&self) -> Result<VarcorrConfig> {
        Ok(VarcorrConfig {
            n_train: self.n_train,
            n_test: self.n_test,
            trials: self.trials,
            methods: self.methods.clone(),
            hmc: self.hmc_config(0),
            hmc_eval_samples: self.hmc_eval_samples,
            prior_tau: GammaPosterior::new(self.tau_a0, self.tau_b0)?,
        })
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    if v.is_empty() || v == "none" {
        None
    } else {
        Some(PathBuf::from(v))
    }
}

fn bad(key: &str, value: &str, expected: &str) -> CliError {
    CliError::Config(format!("{key}: `{value}` is not valid; expected {expected}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, "a number"))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, v, "true or false")),
    }
}

fn parse_family(v: &str) -> Result<Family> {
    match v {
        "nng-ffg" => Ok(Family::Ffg),
        "nng-mvg" => Ok(Family::Mvg),
        "nng-full" => Ok(Family::Full),
        _ => Err(bad("method", v, "nng-ffg, nng-mvg or nng-full")),
    }
}

fn parse_list<T>(key: &str, v: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| f(s.trim()).ok_or_else(|| bad(key, s.trim(), "a comma separated list"))).collect()
}
