use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrcert")).args(args).output().unwrap()
}

fn base_config(name: &str) -> Value {
    json!({
        "schema_version": 1,
        "name": name,
        "grid": {"r_g": 0.0276, "l_g": 0.000367, "frequency_hz": 60.0, "v_g_ref": [392.0, 0.0]},
        "bank": {"branches": [{"elements": [{"kind": "linear", "k": 2.0}]}]},
        "scenario": {"kind": "voltage_pulse", "t_on": 0.001, "t_off": 0.002, "t_end": 0.01, "dt": 1e-6}
    })
}

fn write(dir: &Path, file: &str, v: &Value) -> PathBuf {
    let p = dir.join(file);
    fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}

fn error_doc(o: &Output) -> Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().last().expect("error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

#[test]
fn simulate_writes_artifacts_inside_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", &base_config("run"));
    let out = tmp.path().join("out");
    let o = bin(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--decimation", "100"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "metrics.json", "trajectory.csv"]);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    // 10 000 steps at decimation 100 plus header
    assert_eq!(csv.lines().count(), 102);

    let manifest: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    for (file, hash) in manifest["artifacts"].as_object().unwrap() {
        let bytes = fs::read(out.join(file)).unwrap();
        assert_eq!(hash.as_str().unwrap(), vrcert_cli::config::sha256_hex(&bytes));
    }
    let raw = fs::read(&cfg).unwrap();
    assert_eq!(manifest["config_sha256"], vrcert_cli::config::sha256_hex(&raw));
}

#[test]
fn negative_resistance_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config("bad");
    c["grid"]["r_g"] = json!(-1.0);
    let cfg = write(tmp.path(), "c.json", &c);
    let o = bin(&["simulate", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_doc(&o);
    assert_eq!(e["error"]["kind"], "config");
    assert_eq!(e["error"]["field"], "grid.r_g");
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn schema_violations_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut unknown = base_config("u");
    unknown["grid"]["colour"] = json!("red");
    let mut version = base_config("v");
    version["schema_version"] = json!(99);
    let mut neg_k = base_config("k");
    neg_k["bank"]["branches"][0]["elements"][0]["k"] = json!(-2.0);
    let mut window = base_config("w");
    window["scenario"]["t_off"] = json!(0.0005);
    for (i, c) in [unknown, version, neg_k, window].iter().enumerate() {
        let cfg = write(tmp.path(), &format!("c{i}.json"), c);
        let o = bin(&["simulate", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "case {i}");
        assert_eq!(error_doc(&o)["error"]["exit_code"], 2);
    }
    let o = bin(&["simulate", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sector_violation_names_the_branch() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config("sector");
    c["bank"]["branches"] = json!([
        {"elements": [{"kind": "linear", "k": 1.0}]},
        {"elements": [{"kind": "tabulated", "points": [[1.0, -1.0]]}]}
    ]);
    c["certify"] = json!({"enabled": true});
    let cfg = write(tmp.path(), "c.json", &c);
    let o = bin(&["certify", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_doc(&o);
    assert_eq!(e["error"]["field"], "bank.branches[1]");
}

#[test]
fn numeric_abort_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config("abort");
    c["bank"]["branches"] = json!([{"elements": [{"kind": "tabulated", "points": [[1.0, -1.0e6]]}]}]);
    c["scenario"] = json!({"kind": "custom", "t_end": 0.1, "dt": 1e-4, "i_err0": [1.0, 0.0]});
    let cfg = write(tmp.path(), "c.json", &c);
    let o = bin(&["simulate", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let e = error_doc(&o);
    assert_eq!(e["error"]["kind"], "numeric_abort");
    assert!(e["error"]["time"].as_f64().unwrap() > 0.0);
}

#[test]
fn verbatim_mode_always_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config("verb");
    c["bank"]["branches"] = json!([
        {"elements": [{"kind": "linear", "k": 1.0}]},
        {"elements": [{"kind": "cubic", "k": 0.1}]}
    ]);
    c["certify"] = json!({"enabled": true, "search": {"starts": 2, "max_iterations": 100}});
    let cfg = write(tmp.path(), "c.json", &c);
    let o = bin(&[
        "certify",
        cfg.to_str().unwrap(),
        "--mode",
        "verbatim",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0) | Some(4)));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Lambda_l twice"), "{err}");
    let report = fs::read_to_string(tmp.path().join("o/certify_report.json"))
        .or_else(|_| fs::read_to_string(tmp.path().join("o/certificate.json")))
        .unwrap();
    assert!(report.contains("Lambda_l twice"));
}

#[test]
fn compare_contracts() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(bin(&["compare", empty.to_str().unwrap()]).status.code(), Some(2));

    let one = tmp.path().join("one");
    fs::create_dir(&one).unwrap();
    write(&one, "a.json", &base_config("a"));
    let out = tmp.path().join("o1");
    let o = bin(&["compare", one.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let mixed = tmp.path().join("mixed");
    fs::create_dir(&mixed).unwrap();
    write(&mixed, "a.json", &base_config("a"));
    let mut b = base_config("b");
    b["scenario"]["t_off"] = json!(0.003);
    write(&mixed, "b.json", &b);
    let o = bin(&["compare", mixed.to_str().unwrap(), "--out", tmp.path().join("o2").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn certify_m0_reports_margins() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = base_config("m0");
    c["bank"] = json!({"branches": []});
    c["certify"] = json!({"enabled": true});
    let cfg = write(tmp.path(), "c.json", &c);
    let out = tmp.path().join("o");
    let o = bin(&["certify", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&fs::read(out.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(doc["search"]["seed"], 7);
    assert!(doc["certificate"]["margins"]["psi_margin"].as_f64().unwrap() <= 1e-6);
    assert!(doc["iss_gain"].as_f64().unwrap() > 0.0);
}
