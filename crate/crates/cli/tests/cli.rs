use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_jubilee");

fn worked_example(a: f64, alpha: f64) -> Value {
    json!({
        "market": {
            "debt": 2.0,
            "creditors": 2,
            "continuation_value": a,
            "distribution": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
            "revision": {"kind": "linear", "alpha": alpha}
        },
        "quadrature": {"scheme": "gauss-legendre", "nodes": 64},
        "protocol": {"seed": 11}
    })
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn jubilee(config: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--config").arg(config).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn settle_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &worked_example(2.0, 1.0));
    let out_file = dir.path().join("settle.json");
    let out = jubilee(&cfg, &["settle", "--types", "0.3,0.6", "--out", out_file.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let record = read_json(&out_file);
    assert!((record["outcome"]["forgiveness"][0].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert_eq!(record["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(record["seed"], 11);

    let bankrupt = write_config(dir.path(), "b.json", &worked_example(1.0, 0.0));
    assert_eq!(code(&jubilee(&bankrupt, &["settle", "--types", "0.99,0.99"])), 3);
    // Outside the support and wrong profile length are domain errors.
    assert_eq!(code(&jubilee(&cfg, &["settle", "--types", "1.5,0.2"])), 2);
    assert_eq!(code(&jubilee(&cfg, &["settle", "--types", "0.5"])), 2);

    let types = dir.path().join("types.json");
    std::fs::write(&types, "[0.3, 0.6]").unwrap();
    assert_eq!(code(&jubilee(&cfg, &["settle", "--types-file", types.to_str().unwrap()])), 0);
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut unknown = worked_example(2.0, 1.0);
    unknown["market"]["colour"] = json!("red");
    let cfg = write_config(dir.path(), "u.json", &unknown);
    let out = jubilee(&cfg, &["settle", "--types", "0.3,0.6"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let mut invalid = worked_example(2.0, 1.0);
    invalid["market"]["creditors"] = json!(1);
    let cfg = write_config(dir.path(), "i.json", &invalid);
    assert_eq!(code(&jubilee(&cfg, &["settle", "--types", "0.3"])), 1);

    assert_eq!(code(&jubilee(&dir.path().join("missing.json"), &["settle", "--types", "0.3"])), 1);
    let out = Command::new(BIN).args(["settle", "--types", "0.3,0.6"]).env_remove("JUBILEE_CONFIG").output().unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &worked_example(2.0, 1.0));
    let out = Command::new(BIN).args(["settle", "--types", "0.3,0.6"]).env("JUBILEE_CONFIG", &cfg).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("forgiveness 0.500000"));
}

#[test]
fn verify_report_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &worked_example(2.0, 1.0));
    let report = dir.path().join("report.json");
    let out = jubilee(&cfg, &["--quiet", "verify", "--out", report.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());

    let schema: Value =
        serde_json::from_str(include_str!("../schema/verification-report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let instance = read_json(&report);
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:#?}");
    let mut broken = instance.clone();
    broken["unexpected"] = json!(1);
    assert!(!validator.is_valid(&broken));
}

#[test]
fn negative_control_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &worked_example(2.0, 0.0));
    let report = dir.path().join("report.json");
    let out = jubilee(&cfg, &["verify", "--negative-control", "--out", report.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    let value = read_json(&report);
    assert!(value["max_ic_violation"].as_f64().unwrap() > 0.01);
    assert_eq!(value["spec"]["negative_control"], 0.5);
}

#[test]
fn simulate_is_deterministic_and_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &worked_example(1.0, 0.0));
    let run = |name: &str| {
        let stem = dir.path().join(name);
        let out = jubilee(&cfg, &["--seed", "5", "simulate", "--draws", "100000", "--out", stem.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        (
            std::fs::read(stem.with_extension("json")).unwrap(),
            std::fs::read(stem.with_extension("csv")).unwrap(),
        )
    };
    let (json_a, csv_a) = run("a");
    let (json_b, csv_b) = run("b");
    assert_eq!(json_a, json_b);
    assert_eq!(csv_a, csv_b);

    let table: Value = serde_json::from_slice(&json_a).unwrap();
    assert_eq!(table["seed"], 5);
    let row0 = &table["rows"][0];
    assert_eq!(row0["alpha"], 0.0);
    let profit = row0["debtor_profit"]["value"].as_f64().unwrap();
    let se = row0["debtor_profit"]["std_error"].as_f64().unwrap();
    assert!((profit - 1.0 / 24.0).abs() < 3.0 * se, "{profit} ± {se}");
    let csv = String::from_utf8(csv_a).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(1).unwrap().ends_with(table["config_hash"].as_str().unwrap()));

    assert_eq!(code(&jubilee(&cfg, &["simulate", "--draws", "0"])), 2);
    // Nothing but the outputs is left behind.
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 5, "{names:?}");
}

#[test]
fn local_protocol_matches_settle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &worked_example(2.0, 1.0));
    let settle = dir.path().join("settle.json");
    let transcript = dir.path().join("transcript.jsonl");
    assert_eq!(code(&jubilee(&cfg, &["settle", "--types", "0.3,0.6", "--out", settle.to_str().unwrap()])), 0);
    let out = jubilee(&cfg, &["protocol", "--all-local", "--types", "0.3,0.6", "--out", transcript.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let reference = read_json(&settle);
    let text = std::fs::read_to_string(&transcript).unwrap();
    let footer: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    for i in 0..2 {
        let a = reference["outcome"]["forgiveness"][i].as_f64().unwrap();
        let b = footer["outcome"]["forgiveness"][i].as_f64().unwrap();
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
    assert!(footer["leakage_notes"].as_array().unwrap().len() >= 3);
    for line in text.lines().take(text.lines().count() - 1) {
        let msg: Value = serde_json::from_str(line).unwrap();
        assert_eq!(msg["v"], 1);
        assert_eq!(msg["session"], footer["session"]);
    }

    // Same seed, same bytes.
    let again = dir.path().join("again.jsonl");
    jubilee(&cfg, &["protocol", "--all-local", "--types", "0.3,0.6", "--out", again.to_str().unwrap()]);
    assert_eq!(std::fs::read(&again).unwrap(), text.as_bytes());
}

#[test]
fn protocol_argument_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &worked_example(2.0, 1.0));
    assert_eq!(code(&jubilee(&cfg, &["protocol", "--role", "creditor", "--index", "1"])), 2);
    assert_eq!(code(&jubilee(&cfg, &["protocol", "--role", "evaluator", "--index", "3"])), 2);
    // No endpoints configured.
    assert_eq!(code(&jubilee(&cfg, &["protocol", "--role", "debtor"])), 1);
}

#[test]
fn lone_evaluator_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = worked_example(2.0, 1.0);
    let ports: Vec<u16> = (0..5)
        .map(|_| std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port())
        .collect();
    let roles = ["C0", "C1", "E1", "E2", "D"];
    config["protocol"]["endpoints"] =
        roles.iter().zip(&ports).map(|(r, p)| (r.to_string(), json!(format!("127.0.0.1:{p}")))).collect();
    config["protocol"]["timeout_ms"] = json!(300);
    let cfg = write_config(dir.path(), "c.json", &config);
    let out = jubilee(&cfg, &["protocol", "--role", "evaluator", "--index", "1"]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
}
