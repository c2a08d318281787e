use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn loopint(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loopint"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("LOOPINT_SEED")
        .env_remove("LOOPINT_CONFIG")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap()).unwrap()
}

#[test]
fn index_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"index": {"fluxes": [1], "grid": 16, "samples": 100000}}"#);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ra = loopint(&a, &["index", "--config", &cfg, "--seed", "7"]);
    let rb = loopint(&b, &["index", "--config", &cfg, "--seed", "7", "--workers", "2"]);
    assert_eq!(ra.status.code(), rb.status.code());
    let ja = std::fs::read(a.join("index.json")).unwrap();
    let jb = std::fs::read(b.join("index.json")).unwrap();
    let (va, vb): (Value, Value) = (serde_json::from_slice(&ja).unwrap(), serde_json::from_slice(&jb).unwrap());
    // only the recorded worker count differs
    assert_eq!(va["results"], vb["results"]);
    assert_eq!(va["config"]["seed"], 7);
    let again = tmp.path().join("c");
    loopint(&again, &["index", "--config", &cfg, "--seed", "7"]);
    assert_eq!(ja, std::fs::read(again.join("index.json")).unwrap());
    assert_eq!(std::fs::read(a.join("landau_levels.csv")).unwrap(), std::fs::read(again.join("landau_levels.csv")).unwrap());
}

#[test]
fn malformed_form_expression_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"forms": ["wedge(point(0.5, dx(1, 1)), point(0.2, dx(1, cos([1], 2))))"]}"#);
    let out = tmp.path().join("out");
    let r = loopint(&out, &["compare", "--config", &cfg]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("form expression"));
    assert!(!out.exists());
}

#[test]
fn unknown_keys_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"compare": {"samples": 10, "sample": 10}}"#);
    let out = tmp.path().join("out");
    assert_eq!(loopint(&out, &["zeta-toy", "--config", &cfg]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn exhausted_spectral_budget_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"forms": ["point(0.5, dx(1, 2, 1))"], "times": [0.001], "compare": {"cutoff": 2, "nodes": 4, "samples": 10}}"#,
    );
    assert_eq!(loopint(&tmp.path().join("out"), &["compare", "--config", &cfg]).status.code(), Some(4));
}

#[test]
fn tolerance_failure_exits_3_with_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    // a z-score bound of 1e-6 is far too strict for any Monte Carlo estimate
    let cfg = write_config(tmp.path(), r#"{"tolerance": {"z_max": 1e-6}, "refine": {"samples": 2000}}"#);
    let out = tmp.path().join("out");
    let r = loopint(&out, &["refine", "--config", &cfg]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("FAIL"));
    assert_eq!(report(&out, "refine")["passed"], false);
}

#[test]
fn report_reruns_from_its_embedded_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"seed": 3, "forms": ["point(0.25, dx(1, 2, 1))"], "compare": {"samples": 4000, "grid": 8}}"#);
    let a = tmp.path().join("a");
    assert_eq!(loopint(&a, &["compare", "--config", &cfg]).status.code(), Some(0));
    let b = tmp.path().join("b");
    let previous = a.join("compare.json").display().to_string();
    assert_eq!(loopint(&b, &["compare", "--config", &previous]).status.code(), Some(0));
    assert_eq!(std::fs::read(a.join("compare.json")).unwrap(), std::fs::read(b.join("compare.json")).unwrap());
    assert_eq!(std::fs::read(a.join("compare.csv")).unwrap(), std::fs::read(b.join("compare.csv")).unwrap());
}

#[test]
fn environment_overrides_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let r = Command::new(env!("CARGO_BIN_EXE_loopint"))
        .args(["zeta-toy", "--out"])
        .arg(&out)
        .env("LOOPINT_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(report(&out, "zeta-toy")["config"]["seed"], 42);
}

#[test]
fn default_invariants_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let start = std::time::Instant::now();
    assert_eq!(loopint(&out, &["invariants"]).status.code(), Some(0));
    assert!(start.elapsed().as_secs() < 60);
    let r = report(&out, "invariants");
    assert_eq!(r["report"], "invariants");
    assert!(r["results"]["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    assert!(out.join("invariants.csv").exists());
}
