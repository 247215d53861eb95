use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command as App};
use nng::commands::{execute, write_json};
use nng::config::{Command, RunConfig, CONFIG_DIR_ENV, KEYS};
use nng::error::{CliError, Result};

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("train", "train on every split and report test RMSE and log likelihood"),
    ("eval", "evaluate a saved checkpoint on a dataset"),
    ("active", "pool-based active learning"),
    ("varcorr", "correlate predictive variances with HMC"),
    ("check", "run the oracle self-check suites"),
];

fn app() -> App {
    let mut app = App::new("nng")
        .about("Noisy natural gradient variational inference for Bayesian neural networks")
        .after_help(format!(
            "Defaults are read from ${CONFIG_DIR_ENV}/default.conf when set, then --config, then flags."
        ))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in SUBCOMMANDS {
        let mut sub = App::new(*name)
            .about(*about)
            .arg(Arg::new("config").long("config").value_name("FILE").help("flat key = value config file"));
        for (key, help) in KEYS {
            let long = key.replace('_', "-");
            let arg = Arg::new(*key).long(long).help(*help);
            sub = sub.arg(if *key == "fast" { arg.action(ArgAction::SetTrue) } else { arg.value_name("VALUE") });
        }
        app = app.subcommand(sub);
    }
    app
}

fn overrides(m: &ArgMatches) -> Vec<(String, String)> {
    KEYS.iter()
        .filter_map(|(key, _)| {
            if *key == "fast" {
                m.get_flag(key).then(|| (key.to_string(), "true".to_string()))
            } else {
                m.get_one::<String>(key).map(|v| (key.to_string(), v.clone()))
            }
        })
        .collect()
}

fn run(matches: &ArgMatches) -> Result<bool> {
    let (name, sub) = matches.subcommand().ok_or_else(|| CliError::Config("no command given".into()))?;
    let command = Command::parse(name).ok_or_else(|| CliError::Config(format!("unknown command `{name}`")))?;
    let file = sub.get_one::<String>("config").map(PathBuf::from);
    let cfg = RunConfig::resolve(command, file.as_deref(), &overrides(sub))?;
    let report = execute(&cfg)?;
    write_json(&report.json, cfg.output.as_deref())?;
    Ok(report.ok)
}

fn main() -> ExitCode {
    let matches = app().get_matches();
    match run(&matches) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: {}", CliError::CheckFailed("one or more suites failed".into()));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_a_flag() {
        app().debug_assert();
        let m = app().get_matches_from(["nng", "train", "--dataset", "d.csv", "--tr-c0", "none", "--fast"]);
        let (_, sub) = m.subcommand().unwrap();
        let o = overrides(sub);
        assert!(o.contains(&("dataset".into(), "d.csv".into())));
        assert!(o.contains(&("tr_c0".into(), "none".into())));
        assert!(o.contains(&("fast".into(), "true".into())));
        assert_eq!(o.len(), 3);
    }
}
