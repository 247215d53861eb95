//! The five commands. Each returns a JSON report; wall-clock figures are kept
//! under its `timing` key so that everything else is reproducible from the
//! configuration and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nng_core::bench::{
    active_learning_run, predict_samples, rmse, run_split, sample_means, split_seed, synthetic_1d, test_log_likelihood,
    variance_correlation_trial, ActiveOutcome, Dataset, Normalizer, SplitOutcome, StepRecord, Summary, TrainedModel,
    VarcorrOutcome, VarcorrTrial,
};
use nng_core::rng::stream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::check;
use crate::config::{Command, RunConfig};
use crate::data::load_csv;
use crate::error::{CliError, Result};

/// Report of one command. `ok` is false when a check suite failed.
#[derive(Clone, Debug)]
pub struct Report {
    pub json: Value,
    pub ok: bool,
}

/// A trained split as written to disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: std::collections::BTreeMap<String, String>,
    pub split: usize,
    pub seed: u64,
    pub model: TrainedModel,
    pub normalizer: Normalizer,
}

const SYNTHETIC_STREAM: u64 = 0x73796e;

pub fn execute(cfg: &RunConfig) -> Result<Report> {
    let start = Instant::now();
    let (mut body, mut timing, ok) = match cfg.command {
        Command::Train => train(cfg)?,
        Command::Eval => (eval(cfg)?, Map::new(), true),
        Command::Active => (active(cfg)?, Map::new(), true),
        Command::Varcorr => varcorr(cfg)?,
        Command::Check => check_cmd(cfg)?,
    };
    body.insert("command".into(), json!(cfg.command.name()));
    body.insert("config".into(), json!(cfg.entries()));
    timing.insert("total_seconds".into(), json!(start.elapsed().as_secs_f64()));
    body.insert("timing".into(), Value::Object(timing));
    Ok(Report { json: Value::Object(body), ok })
}

/// Pretty JSON followed by a newline, to `path` or standard output.
pub fn write_json(value: &Value, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(format!("writing {}", p.display()), e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io("stdout", e)),
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

fn summary(s: &Summary) -> Value {
    json!({ "mean": s.mean, "se": s.se, "n": s.n })
}

fn dataset_or_synthetic(cfg: &RunConfig) -> Result<(Dataset, Value)> {
    match &cfg.dataset {
        Some(p) => {
            let d = load_csv(p)?;
            let info = json!({ "path": p.display().to_string(), "rows": d.len(), "features": d.num_features() });
            Ok((d, info))
        }
        None => {
            let d = synthetic_1d(cfg.synthetic_rows, &mut stream(cfg.seed, SYNTHETIC_STREAM));
            Ok((d, json!({ "synthetic": true, "rows": cfg.synthetic_rows, "features": 1 })))
        }
    }
}

fn required_dataset(cfg: &RunConfig) -> Result<(Dataset, Value)> {
    let p = cfg.dataset.as_ref().ok_or_else(|| CliError::Config(format!("{} needs a dataset", cfg.command.name())))?;
    let d = load_csv(p)?;
    let info = json!({ "path": p.display().to_string(), "rows": d.len(), "features": d.num_features() });
    Ok((d, info))
}

fn step_json(split: usize, r: &StepRecord) -> Value {
    json!({
        "split": split,
        "step": r.report.step,
        "epoch": r.epoch,
        "skipped": r.report.skipped,
        "step_size": r.report.step_size,
        "grad_norm": r.report.grad_norm,
        "log_likelihood": r.report.log_likelihood,
        "tau": r.tau,
        "elbo": r.elbo,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let ctx = |e: csv::Error| CliError::io(format!("writing {}", path.display()), e.into());
    let mut w = csv::Writer::from_path(path).map_err(ctx)?;
    w.write_record(header).map_err(ctx)?;
    for r in rows {
        w.write_record(r).map_err(ctx)?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

type Parts = (Map<String, Value>, Map<String, Value>, bool);

fn train(cfg: &RunConfig) -> Result<Parts> {
    let (data, info) = required_dataset(cfg)?;
    let tcfg = cfg.train_config()?;
    let spec = cfg.split_spec();
    let log = cfg.step_log.is_some();
    let run = |i: usize| -> Result<(SplitOutcome, Vec<Value>, f64)> {
        let t = Instant::now();
        let mut steps = Vec::new();
        let o = run_split(&data, &tcfg, &spec, i, &mut |r| {
            if log {
                steps.push(step_json(i, r));
            }
        })?;
        Ok((o, steps, t.elapsed().as_secs_f64()))
    };
    let mut results: Vec<(SplitOutcome, Vec<Value>, f64)> =
        pool(cfg.workers)?.install(|| (0..spec.repeats).into_par_iter().map(run).collect::<Result<Vec<_>>>())?;
    results.sort_by_key(|r| r.0.index);

    if let Some(p) = &cfg.step_log {
        let mut w = create(p)?;
        for v in results.iter().flat_map(|r| &r.1) {
            writeln!(w, "{}", serde_json::to_string(v)?).map_err(|e| CliError::io("step log", e))?;
        }
        w.flush().map_err(|e| CliError::io("step log", e))?;
    }
    let config: std::collections::BTreeMap<String, String> =
        cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let mut splits = Vec::new();
    for (o, _, _) in &results {
        let mut s = json!({
            "index": o.index,
            "seed": o.seed,
            "rmse": o.rmse,
            "loglik": o.loglik,
            "tau": o.tau,
            "steps": o.steps,
            "skipped": o.skipped,
        });
        if let Some(dir) = &cfg.checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
            let path = dir.join(format!("split_{:03}.json", o.index));
            let ck = Checkpoint {
                config: config.clone(),
                split: o.index,
                seed: o.seed,
                model: o.model.clone(),
                normalizer: o.normalizer.clone(),
            };
            let w = create(&path)?;
            serde_json::to_writer(w, &ck)?;
            s["checkpoint"] = json!(path.display().to_string());
        }
        splits.push(s);
    }
    let r: Vec<f64> = results.iter().map(|r| r.0.rmse).collect();
    let l: Vec<f64> = results.iter().map(|r| r.0.loglik).collect();
    let (rs, ls) = (Summary::of(&r)?, Summary::of(&l)?);
    if let Some(p) = &cfg.table {
        let mut rows: Vec<Vec<String>> =
            results.iter().map(|r| vec![r.0.index.to_string(), r.0.rmse.to_string(), r.0.loglik.to_string()]).collect();
        rows.push(vec!["mean".into(), rs.mean.to_string(), ls.mean.to_string()]);
        rows.push(vec!["se".into(), fmt_opt(rs.se), fmt_opt(ls.se)]);
        write_table(p, &["split", "rmse", "loglik"], &rows)?;
    }

    let mut body = Map::new();
    body.insert("dataset".into(), info);
    body.insert("method".into(), json!(cfg.method.name()));
    body.insert("seeds".into(), json!(results.iter().map(|r| r.0.seed).collect::<Vec<_>>()));
    body.insert("splits".into(), Value::Array(splits));
    body.insert("rmse".into(), summary(&rs));
    body.insert("loglik".into(), summary(&ls));
    let mut timing = Map::new();
    timing.insert("split_seconds".into(), json!(results.iter().map(|r| r.2).collect::<Vec<_>>()));
    Ok((body, timing, true))
}

/// Read a checkpoint written by `train`.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|e| CliError::io(format!("checkpoint {}", path.display()), e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

fn eval(cfg: &RunConfig) -> Result<Map<String, Value>> {
    let (data, info) = required_dataset(cfg)?;
    let path = cfg.checkpoint.as_ref().ok_or_else(|| CliError::Config("eval needs a checkpoint".into()))?;
    let ck = load_checkpoint(path)?;
    let norm = &ck.normalizer;
    if data.num_features() != norm.feature_means.len() {
        return Err(CliError::Config(format!(
            "checkpoint expects {} features, dataset has {}",
            norm.feature_means.len(),
            data.num_features()
        )));
    }
    let xs: Vec<Vec<f64>> = data.features.iter().map(|x| norm.features(x)).collect();
    let y_norm: Vec<f64> = data.targets.iter().map(|&y| norm.target(y)).collect();
    let post = ck.model.posterior();
    let samples = predict_samples(&ck.model.arch, &post, &xs, cfg.samples, &mut stream(cfg.seed, 2))?;
    let means: Vec<f64> = sample_means(&samples).into_iter().map(|m| norm.denormalize_target(m)).collect();
    let tau = ck.model.tau();
    let mut body = Map::new();
    body.insert("dataset".into(), info);
    body.insert("checkpoint".into(), json!(path.display().to_string()));
    body.insert("method".into(), json!(post.family().name()));
    body.insert("seed".into(), json!(cfg.seed));
    body.insert("rmse".into(), json!(rmse(&means, &data.targets)?));
    body.insert("loglik".into(), json!(test_log_likelihood(&samples, &y_norm, tau, norm.target_std)?));
    body.insert("tau".into(), json!(tau));
    Ok(body)
}

fn active(cfg: &RunConfig) -> Result<Map<String, Value>> {
    let (data, info) = dataset_or_synthetic(cfg)?;
    let tcfg = cfg.train_config()?;
    let acfg = cfg.active_config();
    let seeds: Vec<u64> = (0..cfg.trials).map(|t| split_seed(cfg.seed, t)).collect();
    let runs: Vec<ActiveOutcome> = pool(cfg.workers)?.install(|| {
        seeds.par_iter().map(|&s| active_learning_run(&data, &tcfg, &acfg, s)).collect::<nng_core::Result<Vec<_>>>()
    })?;
    let rounds = acfg.rounds + 1;
    let per_round: Vec<Summary> = (0..rounds)
        .map(|r| Summary::of(&runs.iter().map(|o| o.rmse[r]).collect::<Vec<_>>()))
        .collect::<nng_core::Result<_>>()?;
    if let Some(p) = &cfg.table {
        let rows: Vec<Vec<String>> = per_round
            .iter()
            .enumerate()
            .map(|(r, s)| vec![r.to_string(), (acfg.n_train + r).to_string(), s.mean.to_string(), fmt_opt(s.se)])
            .collect();
        write_table(p, &["round", "train_size", "rmse_mean", "rmse_se"], &rows)?;
    }
    let trials: Vec<Value> =
        runs.iter().zip(&seeds).map(|(o, s)| json!({ "seed": s, "rmse": o.rmse, "acquired": o.acquired })).collect();
    let mut body = Map::new();
    body.insert("dataset".into(), info);
    body.insert("method".into(), json!(cfg.method.name()));
    body.insert("acquisition".into(), json!(acfg.acquisition));
    body.insert("seeds".into(), json!(seeds));
    body.insert("trials".into(), Value::Array(trials));
    body.insert("rmse_by_round".into(), Value::Array(per_round.iter().map(summary).collect()));
    Ok(body)
}

fn varcorr(cfg: &RunConfig) -> Result<Parts> {
    let (data, info) = dataset_or_synthetic(cfg)?;
    let tcfg = cfg.train_config()?;
    let vcfg = cfg.varcorr_config()?;
    let run = |t: usize| -> Result<(VarcorrTrial, f64)> {
        let start = Instant::now();
        let r = variance_correlation_trial(&data, &tcfg, &vcfg, cfg.seed, t)?;
        Ok((r, start.elapsed().as_secs_f64()))
    };
    let mut results: Vec<(VarcorrTrial, f64)> =
        pool(cfg.workers)?.install(|| (0..vcfg.trials).into_par_iter().map(run).collect::<Result<Vec<_>>>())?;
    results.sort_by_key(|r| r.0.index);
    let seconds: Vec<f64> = results.iter().map(|r| r.1).collect();
    let out = VarcorrOutcome::from_trials(vcfg.methods.clone(), results.into_iter().map(|r| r.0).collect())?;
    if let Some(p) = &cfg.table {
        let rows: Vec<Vec<String>> = out
            .methods
            .iter()
            .zip(&out.summaries)
            .zip(&out.medians)
            .map(|((m, s), med)| vec![m.name().to_string(), s.mean.to_string(), fmt_opt(s.se), med.to_string()])
            .collect();
        write_table(p, &["method", "pearson_mean", "pearson_se", "pearson_median"], &rows)?;
    }
    let methods: Vec<Value> = out
        .methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            json!({
                "method": m.name(),
                "pearson": summary(&out.summaries[k]),
                "median": out.medians[k],
                "trials": out.trials.iter().map(|t| t.correlations[k]).collect::<Vec<_>>(),
            })
        })
        .collect();
    let trials: Vec<Value> = out
        .trials
        .iter()
        .map(|t| json!({ "index": t.index, "seed": t.seed, "hmc_acceptance": t.hmc_acceptance, "hmc_flagged": t.hmc_flagged }))
        .collect();
    let mut body = Map::new();
    body.insert("dataset".into(), info);
    body.insert("methods".into(), Value::Array(methods));
    body.insert("trials".into(), Value::Array(trials));
    body.insert("hmc_flagged".into(), json!(out.trials.iter().filter(|t| t.hmc_flagged).count()));
    let mut timing = Map::new();
    timing.insert("trial_seconds".into(), json!(seconds));
    Ok((body, timing, true))
}

fn check_cmd(cfg: &RunConfig) -> Result<Parts> {
    let outcomes = check::run_all(cfg.fast, cfg.seed)?;
    let ok = outcomes.iter().all(|o| o.passed);
    let suites: Vec<Value> =
        outcomes.iter().map(|o| json!({ "name": o.name, "passed": o.passed, "metrics": o.metrics })).collect();
    let mut body = Map::new();
    body.insert("fast".into(), json!(cfg.fast));
    body.insert("suites".into(), Value::Array(suites));
    body.insert("passed".into(), json!(ok));
    Ok((body, Map::new(), ok))
}
