use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn mnflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mnflow")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn small_picard(name: &str, data: Value) -> Value {
    json!({
        "name": name,
        "mode": "picard",
        "domain": { "kind": "periodic_box", "length": 8.0, "n": 8 },
        "scheme": { "t_end": 0.5, "dt": 0.1 },
        "data": data,
        "seed": 3
    })
}

#[test]
fn bookkeeping_defaults_hold_in_three_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let out = mnflow(&["bookkeeping", "--N", "3", "--sigma", "0.1", "--p", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["decay_inequality"], true);
    assert_eq!(v[0]["weight_inequality"], true);

    let out = mnflow(&["bookkeeping", "--N", "2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().all(|r| r["holds"] == false));
}

#[test]
fn bookkeeping_scenario_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bk.json", &json!({ "name": "bk", "mode": "bookkeeping" }));
    let out = mnflow(&["run", &cfg, "--output-dir", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res/bk");
    let rep = read_json(&res.join("bookkeeping.json"));
    assert!(rep["reports"].as_array().unwrap().iter().all(|r| r["holds"] == true));
    let csv = std::fs::read_to_string(res.join("bookkeeping.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.split(',').all(|h| h.starts_with("decay::exponent_bookkeeping::")));
    assert!(!csv.contains('\r'));
    let meta = read_json(&res.join("metadata.json"));
    assert!(meta["started_unix"].as_f64().unwrap() > 0.0);
    assert!(res.join("plot.gp").exists());
}

#[test]
fn zero_data_picard_takes_one_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "z.json", &small_picard("zero", json!({ "kind": "zero" })));
    let out = mnflow(&["run", &cfg, "--output-dir", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = read_json(&dir.path().join("res/zero/picard.json"));
    assert_eq!(rep["picard"]["iterates"], 1);
    assert_eq!(rep["picard"]["verdict"], "converged");
    let csv = std::fs::read_to_string(dir.path().join("res/zero/picard_iterates.csv")).unwrap();
    assert!(csv.starts_with("scheme::picard_fixed_point::iterate,"));
}

#[test]
fn short_decay_window_exits_with_property_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.json",
        &json!({
            "name": "short",
            "mode": "linear-decay",
            "domain": { "kind": "periodic_box", "length": 8.0, "n": 8 },
            "data": { "kind": "velocity_gaussian", "amplitude": 0.01, "width": 1.0 },
            "decay": { "cells": [{ "kind": "state", "p": 2.0, "q": 1.0 }], "config": { "t_max": 2.0 } }
        }),
    );
    let out = mnflow(&["run", &cfg, "--output-dir", "res"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let rep = read_json(&dir.path().join("res/short/decay.json"));
    assert_eq!(rep["fits"][0]["verdict"], "inconclusive");
}

#[test]
fn validation_names_broken_rules() {
    let dir = tempfile::tempdir().unwrap();
    let good = small_picard("ok", json!({ "kind": "zero" }));
    let cfg = write(dir.path(), "ok.json", &good);
    let out = mnflow(&["validate", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(serde_json::from_slice::<Value>(&out.stdout).unwrap(), json!([]));

    let mut bad = good.clone();
    bad["params"] = json!({ "mu": -1.0, "nu": 2.0, "rho_star": 1.0 });
    let cfg = write(dir.path(), "mu.json", &bad);
    let out = mnflow(&["validate", &cfg], dir.path());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().any(|x| x["key"] == "params.mu" && x["rule"].as_str().unwrap().contains("mu > 0")));

    let mut bad = good.clone();
    bad["params"] = json!({ "mu": 1.0, "nu": 0.0, "rho_star": 1.0, "sigma": 0.2 });
    let cfg = write(dir.path(), "sigma.json", &bad);
    let out = mnflow(&["validate", &cfg], dir.path());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().any(|x| x["key"] == "params.sigma" && x["rule"].as_str().unwrap().contains("sigma < 1/6")));

    let out = mnflow(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.sigma"));
}

#[test]
fn malformed_and_missing_configs_exit_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_picard("typo", json!({ "kind": "zero" }));
    v["sede"] = json!(1);
    let cfg = write(dir.path(), "typo.json", &v);
    let out = mnflow(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));

    let out = mnflow(&["validate", "does-not-exist.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = mnflow(&["run", "preset:nope"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.json", &small_picard("rand", json!({ "kind": "random", "amplitude": 1e-3 })));
    for out_dir in ["a", "b"] {
        let out = mnflow(&["run", &cfg, "--output-dir", out_dir], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let meta = read_json(&dir.path().join("a/rand/metadata.json"));
    for f in meta["files"].as_array().unwrap() {
        let f = f.as_str().unwrap();
        let a = std::fs::read(dir.path().join("a/rand").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b/rand").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn jobs_fan_out_over_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", &small_picard("one", json!({ "kind": "zero" })));
    let b = write(dir.path(), "b.json", &json!({ "name": "two", "mode": "bookkeeping" }));
    let out = mnflow(&["run", &a, &b, "--jobs", "2", "--output-dir", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("res/one/picard.json").exists());
    assert!(dir.path().join("res/two/bookkeeping.json").exists());
}

#[test]
fn presets_are_listed_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    let out = mnflow(&["list-scenarios"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("decay-standard") && text.contains("picard-small"));
    for line in text.lines() {
        let name = line.split_whitespace().next().unwrap();
        let shown = mnflow(&["show", name], dir.path());
        let cfg = dir.path().join(format!("{name}.json"));
        std::fs::write(&cfg, &shown.stdout).unwrap();
        let v = mnflow(&["validate", cfg.to_str().unwrap()], dir.path());
        assert_eq!(v.status.code(), Some(0), "{name}");
    }
    let out = mnflow(&["version"], dir.path());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("mnflow "));
}
