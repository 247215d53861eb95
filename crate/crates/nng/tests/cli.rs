//! End-to-end runs of the `nng` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nng(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nng")).args(args).env_remove("NNG_CONFIG_DIR").output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn without_timing(mut v: Value) -> String {
    v.as_object_mut().unwrap().remove("timing").expect("timing subtree present");
    serde_json::to_string(&v).unwrap()
}

/// A noisy line with 60 rows and a header.
fn write_line_csv(path: &Path) {
    let mut s = String::from("x,y\n");
    for i in 0..60 {
        let x = i as f64 / 10.0 - 3.0;
        let noise = ((i * 37 % 11) as f64 - 5.0) / 20.0;
        s.push_str(&format!("{x},{}\n", 2.0 * x + 1.0 + noise));
    }
    fs::write(path, s).unwrap();
}

const QUICK: &[&str] = &["--epochs", "5", "--samples", "20", "--splits", "2", "--hidden", "5"];

#[test]
fn missing_dataset_exits_2_and_names_the_path() {
    let out = nng(&["train", "--dataset", "/no/such/boston.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/boston.csv"));
}

#[test]
fn full_covariance_is_refused_on_large_networks() {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data/boston.csv");
    let out = nng(&["train", "--method", "nng-full", "--dataset", data, "--hidden", "50"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("751") && err.contains("500"), "{err}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "epochs = 3\nlearning_rate = 0.1\n").unwrap();
    let out = nng(&["active", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn random_active_run_is_byte_identical_across_runs() {
    let args =
        ["active", "--acquisition", "random", "--seed", "7", "--epochs", "5", "--samples", "20", "--rounds", "2"];
    let a = without_timing(json(&nng(&args)));
    let b = without_timing(json(&nng(&args)));
    assert_eq!(a, b);
}

#[test]
fn flags_override_config_file_over_default_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("default.conf"), "epochs = 3\nsamples = 17\nseed = 5\n").unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# local run\nepochs = 4\nseed = 6\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_nng"))
        .args(["active", "--config", conf.to_str().unwrap(), "--seed", "9", "--rounds", "0", "--trials", "1"])
        .env("NNG_CONFIG_DIR", dir.path())
        .output()
        .unwrap();
    let v = json(&out);
    let cfg = &v["config"];
    assert_eq!(cfg["samples"], "17");
    assert_eq!(cfg["epochs"], "4");
    assert_eq!(cfg["seed"], "9");
    assert_eq!(cfg["alpha_tilde"], "0.01");
}

#[test]
fn train_writes_metrics_and_checkpoints_that_eval_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("line.csv");
    write_line_csv(&data);
    let ckpt = dir.path().join("ckpt");
    let table = dir.path().join("table.csv");
    let mut args = vec!["train", "--method", "nng-ffg", "--dataset", data.to_str().unwrap()];
    args.extend_from_slice(QUICK);
    args.extend_from_slice(&["--checkpoint-dir", ckpt.to_str().unwrap(), "--table", table.to_str().unwrap()]);
    let v = json(&nng(&args));
    assert!(v["rmse"]["mean"].as_f64().unwrap().is_finite());
    assert!(v["loglik"]["mean"].as_f64().unwrap().is_finite());
    assert_eq!(v["splits"].as_array().unwrap().len(), 2);
    assert!(fs::read_to_string(&table).unwrap().starts_with("split,rmse,loglik"));

    let first = ckpt.join("split_000.json");
    let e = json(&nng(&["eval", "--checkpoint", first.to_str().unwrap(), "--dataset", data.to_str().unwrap()]));
    assert_eq!(e["method"], "nng-ffg");
    let rmse = e["rmse"].as_f64().unwrap();
    assert!(rmse.is_finite() && rmse > 0.0);
}

#[test]
fn parallel_splits_match_serial_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("line.csv");
    write_line_csv(&data);
    let mut args = vec!["train", "--method", "nng-mvg", "--dataset", data.to_str().unwrap()];
    args.extend_from_slice(QUICK);
    let serial = json(&nng(&args));
    args.extend_from_slice(&["--workers", "2"]);
    let parallel = json(&nng(&args));
    assert_eq!(serial["splits"], parallel["splits"]);
    assert_eq!(serial["rmse"], parallel["rmse"]);
}

#[test]
fn fast_check_passes() {
    let v = json(&nng(&["check", "--fast"]));
    assert_eq!(v["passed"], true);
    let names: Vec<&str> = v["suites"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names.first(), Some(&"kron_equivalence"));
    assert_eq!(names.last(), Some(&"hmc_vs_blr"));
}
