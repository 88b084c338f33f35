mod common;

use std::path::Path;
use std::process::Command;

use absorbing_games::cli::run;
use common::fixture_path;
use serde_json::Value;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Outcome {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }

    fn stderr_records(&self) -> Vec<Value> {
        self.stderr.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
    }
}

fn agame(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("agame").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn model(name: &str) -> String {
    fixture_path(name).to_string_lossy().into_owned()
}

fn profile(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn close(a: &Value, b: &Value, tol: f64) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => (x.as_f64().unwrap() - y.as_f64().unwrap()).abs() <= tol,
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| close(p, q, tol)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| close(v, w, tol)))
        }
        _ => a == b,
    }
}

#[test]
fn verify_mixed_pennies() {
    let r = agame(&["verify", &model("matching_pennies"), "--profile", &profile("pennies_mixed.json")]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let cert = r.json();
    assert_eq!(cert["is_equilibrium"], true);
    assert!(cert["epsilon"].as_f64().unwrap() < 1e-12);
}

#[test]
fn validate_then_absorption_on_endless_loop() {
    let path = model("stay_loop");
    let v = agame(&["validate", &path]);
    assert_eq!(v.code, 0);
    assert_eq!(v.json()["valid"], true);
    let a = agame(&["absorption", &path]);
    assert_eq!(a.code, 0);
    let report = a.json();
    assert_eq!(report["is_absorbing"], false);
    let witness = report["offending_component"].as_array().unwrap();
    assert_eq!(witness[0]["state"], "s0");
    assert_eq!(witness[0]["joint_actions"], serde_json::json!(["stay"]));
}

#[test]
fn transform_then_absorption() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("unit.toml").to_string_lossy().into_owned();
    let t = agame(&["transform-discounted", &model("discounted_unit"), "--out", &target]);
    assert_eq!(t.code, 0, "{}", t.stderr);
    let a = agame(&["absorption", &target]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    let report = a.json();
    assert_eq!(report["is_absorbing"], true);
    assert!((report["uniform_bound"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn discounted_model_needs_the_transform() {
    let r = agame(&["absorption", &model("discounted_unit")]);
    assert_eq!(r.code, 4);
    assert!(r.stderr_records()[0]["message"].as_str().unwrap().contains("transform-discounted"));
}

#[test]
fn solve_result_round_trips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("result.json").to_string_lossy().into_owned();
    let s = agame(&["solve", &model("two_player_constrained"), "--constrained", "--seed", "3", "--out", &target]);
    assert_eq!(s.code, 0, "{}", s.stderr);
    let result: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(result["format"], "equilibrium-result");
    assert_eq!(result["solver"]["seed"], 3);
    let v = agame(&["verify", &model("two_player_constrained"), "--profile", &target]);
    assert_eq!(v.code, 0, "{}", v.stderr);
    assert!(close(&v.json(), &result["certificate"], 1e-8), "{}\n{}", v.stdout, result["certificate"]);
}

#[test]
fn unconstrained_result_verifies_unconstrained() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("result.json").to_string_lossy().into_owned();
    let s = agame(&["solve", &model("constrained_single"), "--unconstrained", "--out", &target]);
    assert_eq!(s.code, 0, "{}", s.stderr);
    let v = agame(&["verify", &model("constrained_single"), "--profile", &target]);
    assert_eq!(v.code, 0);
    let cert = v.json();
    assert!((cert["payoffs"]["reward"][0].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn solve_echoes_seed_and_is_reproducible() {
    let args = ["solve", &model("matching_pennies"), "--constrained", "--seed", "99", "--restarts", "4"];
    let a = agame(&args);
    let b = agame(&args);
    assert_eq!(a.code, 0);
    let echo = &a.stderr_records()[0];
    assert_eq!(echo["event"], "seed");
    assert_eq!(echo["seed"], 99);
    let (ja, jb) = (a.json(), b.json());
    assert_eq!(ja["strategies"], jb["strategies"]);
    assert_eq!(ja["certificate"], jb["certificate"]);
    assert_eq!(ja["solver"]["winning_restart"], jb["solver"]["winning_restart"]);
}

#[test]
fn simulate_is_reproducible() {
    let args = [
        "simulate",
        &model("geometric"),
        "--profile",
        &profile("geometric_uniform.json"),
        "--samples",
        "2000",
        "--seed",
        "5",
    ];
    let a = agame(&args);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(a.stdout, agame(&args).stdout);
    assert_eq!(a.stderr_records()[0]["seed"], 5);
    assert_eq!(a.json()["samples"], 2000);
}

#[test]
fn occupancy_reports_mass() {
    let r = agame(&["occupancy", &model("geometric"), "--profile", &profile("geometric_uniform.json")]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report = r.json();
    assert!((report["total_mass"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    assert!(report["residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn best_response_with_lp_dump() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("lp.txt");
    let r = agame(&[
        "best-response",
        &model("matching_pennies"),
        "--player",
        "1",
        "--profile",
        &profile("pennies_mixed.json"),
        "--dump-lp",
        &table.to_string_lossy(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report = r.json();
    assert_eq!(report["player"], 1);
    assert!(report["value"].as_f64().unwrap().abs() < 1e-9);
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.contains("mu[0,0]"));
}

#[test]
fn trace_is_written_as_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let r = agame(&[
        "solve",
        &model("two_player_constrained"),
        "--constrained",
        "--restarts",
        "2",
        "--trace",
        &trace.to_string_lossy(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(&trace).unwrap();
    let records: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!records.is_empty());
    assert!(records.iter().all(|rec| rec["epsilon"].is_number() && rec["restart"].as_u64().unwrap() <= 2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml").to_string_lossy().into_owned();
    let r = agame(&["validate", &missing]);
    assert_eq!(r.code, 4);
    assert_eq!(r.stderr_records()[0]["error"], "Io");

    let bad = write(dir.path(), "bad.toml", "format = \"absorbing-game\"\nversion = 2\n");
    let r = agame(&["validate", &bad]);
    assert_eq!(r.code, 4);
    assert_eq!(r.stderr_records()[0]["exit_code"], 4);

    assert_eq!(agame(&["solve", &model("geometric")]).code, 4);
    assert_eq!(agame(&["frobnicate"]).code, 4);

    let always_a = write(
        dir.path(),
        "always_a.json",
        r#"{"format": "stationary-profile", "version": 1, "strategies": [{"s0": {"a": 1}}]}"#,
    );
    assert_eq!(agame(&["verify", &model("constrained_single"), "--profile", &always_a]).code, 2);

    let pure = write(
        dir.path(),
        "pure.json",
        r#"{"format": "stationary-profile", "version": 1, "strategies": [{"s0": {"H": 1}}, {"s0": {"H": 1}}]}"#,
    );
    assert_eq!(agame(&["verify", &model("matching_pennies"), "--profile", &pure]).code, 1);

    let stuck = dir.path().join("stuck.json");
    let r = agame(&[
        "solve",
        &model("two_player_constrained"),
        "--constrained",
        "--restarts",
        "0",
        "--max-iter",
        "1",
        "--tol",
        "0",
        "--out",
        &stuck.to_string_lossy(),
    ]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(stuck.exists());

    let r = agame(&["solve", &model("stay_loop"), "--unconstrained"]);
    assert_eq!(r.code, 1);
    assert_eq!(r.stderr_records().last().unwrap()["error"], "NotAbsorbing");
}

#[test]
fn binary_runs() {
    let out = Command::new(env!("CARGO_BIN_EXE_agame"))
        .args(["validate", &model("geometric")])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["players"], 1);

    let out = Command::new(env!("CARGO_BIN_EXE_agame"))
        .args(["verify", &model("matching_pennies"), "--profile", "/nonexistent.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}
