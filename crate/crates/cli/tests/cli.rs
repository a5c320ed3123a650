use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn coxplain(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coxplain"))
        .current_dir(dir)
        .args(args)
        .env_remove("COXPLAIN_THREADS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = coxplain(dir, args);
    assert!(
        out.status.success(),
        "coxplain {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A small xor cohort with an early-mlp checkpoint and its mean-masked audit.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--pattern", "xor", "--n", "400", "--out", "ds"]);
    ok(p, &["train", "--data", "ds", "--arch", "early-mlp", "--out", "mlp", "--max-epochs", "30"]);
    ok(p, &["audit", "--model", "mlp", "--data", "ds", "--out", "audit"]);
    dir
}

#[test]
fn synth_writes_a_dataset_directory() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["synth", "--pattern", "xor", "--n", "2000", "--seed", "42", "--out", "ds"]);
    assert!(stdout.contains("event fraction 0.6"), "{stdout}");
    for f in ["meta.json", "a.emb", "b.emb", "survival.csv", "config.json"] {
        assert!(dir.path().join("ds").join(f).is_file(), "{f}");
    }
    let config = json(&dir.path().join("ds/config.json"));
    assert_eq!(config["command"], "synth");
    assert_eq!(config["seed"], 42);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_pattern = coxplain(dir.path(), &["synth", "--pattern", "spiral", "--out", "x"]);
    assert_eq!(bad_pattern.status.code(), Some(2));

    let small = coxplain(dir.path(), &["synth", "--pattern", "xor", "--n", "10", "--out", "x"]);
    assert_eq!(small.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&small.stderr).contains("minimum of 50"));

    let missing = coxplain(dir.path(), &["audit", "--model", "nowhere", "--data", "x", "--out", "y"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nowhere"));

    let no_out = coxplain(dir.path(), &["synth", "--pattern", "xor"]);
    assert_eq!(no_out.status.code(), Some(2));
}

#[test]
fn validate_exit_code_follows_the_checks() {
    let dir = tempfile::tempdir().unwrap();
    let pass = coxplain(dir.path(), &["validate", "--only", "late-fusion-zero", "--out", "v1"]);
    assert_eq!(pass.status.code(), Some(0));
    let suite = json(&dir.path().join("v1/suite.json"));
    let names: Vec<&str> = suite["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.iter().all(|n| n.starts_with("late-fusion-zero")), "{names:?}");

    // the desk early-mlp lands near 15% on uniqueness with the default seed
    let fail = coxplain(dir.path(), &["validate", "--only", "uniqueness", "--out", "v2"]);
    let table = String::from_utf8_lossy(&fail.stdout).into_owned();
    assert_eq!(fail.status.code(), Some(1), "{table}");
    assert!(table.contains("FAIL") && table.contains("[0, 2]"), "{table}");
    assert!(String::from_utf8_lossy(&fail.stderr).contains("uniqueness"));
}

#[test]
fn audits_and_comparisons() {
    let dir = workspace();
    let p = dir.path();
    let report = json(&p.join("audit/audit.json"));
    assert_eq!(report["metadata"]["format"], "coxplain-audit-v1");
    let csv = fs::read_to_string(p.join("audit/audit.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "patient_id,main_a,main_b,interaction_a:b,percent");
    assert_eq!(csv.lines().count() - 1, report["patients"].as_array().unwrap().len());

    let out = ok(p, &["compare", "--audit", "audit/audit.json", "--audit", "audit/audit.json", "--out", "self", "--iterations", "200"]);
    assert!(out.contains("(baseline)"));
    let cmp = json(&p.join("self/compare.json"));
    let delta = &cmp["rows"][1]["delta"];
    assert_eq!(delta["estimate"].as_f64(), Some(0.0));
    assert!(delta["ci_low"].as_f64().unwrap() <= 0.0 && delta["ci_high"].as_f64().unwrap() >= 0.0);
    assert_eq!(cmp["rows"][1]["label"], "early-mlp#2");

    ok(p, &["audit", "--model", "mlp", "--data", "ds", "--patients", "all", "--out", "all"]);
    let mismatch = coxplain(p, &["compare", "--audit", "audit/audit.json", "--audit", "all/audit.json", "--out", "bad"]);
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("different patient set"));

    let one = coxplain(p, &["compare", "--audit", "audit/audit.json", "--out", "bad"]);
    assert_eq!(one.status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = workspace();
    let p = dir.path();
    for (threads, out) in [("1", "t1"), ("4", "t4")] {
        ok(p, &["audit", "--model", "mlp", "--data", "ds", "--masking", "shuffle", "--threads", threads, "--out", out]);
    }
    for f in ["audit.json", "audit.csv"] {
        assert_eq!(fs::read(p.join("t1").join(f)).unwrap(), fs::read(p.join("t4").join(f)).unwrap(), "{f}");
    }
    let env = Command::new(env!("CARGO_BIN_EXE_coxplain"))
        .current_dir(p)
        .args(["audit", "--model", "mlp", "--data", "ds", "--out", "env"])
        .env("COXPLAIN_THREADS", "3")
        .output()
        .unwrap();
    assert!(env.status.success());
    assert_eq!(json(&p.join("env/config.json"))["threads"], 3);
}

#[test]
fn zero_learning_rate_keeps_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--pattern", "uniqueness", "--n", "300", "--out", "ds"]);
    ok(p, &["train", "--data", "ds", "--arch", "gated", "--lr", "0", "--out", "m"]);
    let m = json(&p.join("m/metrics.json"));
    assert_eq!(m["best_val_cindex"], m["val_cindex"]);
    assert_eq!(m["epochs_run"], 20);
}

#[test]
fn unimodal_a_learns_uniqueness_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--pattern", "uniqueness", "--out", "ds"]);
    ok(p, &["train", "--data", "ds", "--arch", "unimodal-a", "--out", "m", "--brier-months", "24"]);
    let m = json(&p.join("m/metrics.json"));
    assert!(m["test_cindex"].as_f64().unwrap() > 0.7, "{m}");
    assert!(m["brier"].as_f64().unwrap() < 0.25, "{m}");
    for f in ["model.json", "model.bin", "split.json", "metrics.json", "config.json"] {
        assert!(p.join("m").join(f).is_file(), "{f}");
    }
}
