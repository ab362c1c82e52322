use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn globid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_globid")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(csv: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn simulate_patient1(dir: &TempDir) -> PathBuf {
    let out = dir.path().join("p1.csv");
    let o = globid(&["simulate", "--patient-id", "1", "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const NARROW_BOX: &str = "2,2.5,90,100";

#[test]
fn simulate_bundled_patient() {
    let dir = TempDir::new().unwrap();
    let out = simulate_patient1(&dir);
    let data = rows(&out);
    assert_eq!(data.len(), 301);
    assert_eq!(data[0][2], 98.8);
    assert_eq!(data[300][0], 300.0);
    let side = read_json(&dir.path().join("p1.manifest.json"));
    assert_eq!(side["rows"], 301);
    assert_eq!(side["manifest"]["command"], "simulate");
    assert_eq!(side["patient"]["id"], 1);
}

#[test]
fn simulate_zero_input_gives_flat_output() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("zero.json");
    fs::write(&input, r#"[{"t": 0, "v": 0}]"#).unwrap();
    let out = dir.path().join("flat.csv");
    let o = globid(&["simulate", "--input", path_str(&input), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = rows(&out);
    assert!(data.iter().all(|r| r[2] == data[0][2] && r[1] == 0.0));
}

#[test]
fn simulate_rejects_misaligned_breakpoint() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("bad.json");
    fs::write(&input, r#"[{"t": 0, "v": 10}, {"t": 10.5, "v": 3}]"#).unwrap();
    let out = dir.path().join("bad.csv");
    let o = globid(&["simulate", "--input", path_str(&input), "--out", path_str(&out)]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("breakpoint 1") && err.contains("10.5"), "{err}");
    assert!(!out.exists());
}

#[test]
fn identify_round_trip_on_narrow_box() {
    let dir = TempDir::new().unwrap();
    let data = simulate_patient1(&dir);
    let out = dir.path().join("fit.json");
    let o = globid(&["identify", "--data", path_str(&data), "--order", "2,2", "--box", NARROW_BOX, "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(&out);
    assert_eq!(r["certificate"], true);
    assert_eq!(r["alpha"].as_array().unwrap().len(), 2);
    assert_eq!(r["beta"].as_array().unwrap().len(), 2);
    assert_eq!(r["lb_count"].as_u64().unwrap(), 2 * r["nodes_split"].as_u64().unwrap());
    let g = r["gamma_hat"].as_f64().unwrap();
    let e = r["emax_hat"].as_f64().unwrap();
    assert!((g - 2.24).abs() <= 0.05, "{g}");
    assert!((90.0..=100.0).contains(&e));
    assert!(r["objective"].as_f64().unwrap() < 1e-6);
    assert_eq!(r["e0"], 98.8);
    assert!(r["manifest"]["config"]["solver"]["epsilon"].as_f64().unwrap() == 1e-3);
}

#[test]
fn identify_manifest_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = simulate_patient1(&dir);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = globid(&["identify", "--data", path_str(&data), "--box", "2.1,2.4,92,98", "--out", path_str(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let mut v = read_json(&out);
        v.as_object_mut().unwrap().remove("runtime_s");
        v
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn identify_flat_data_is_degenerate() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("flat.csv");
    let mut text = String::from("t,u,y\n");
    for k in 0..60 {
        text.push_str(&format!("{k},1,97.5\n"));
    }
    fs::write(&data, text).unwrap();
    let o = globid(&["identify", "--data", path_str(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["objective"].as_f64().unwrap(), 0.0);
    assert_eq!(r["degenerate"], true);
    assert!(stderr(&o).contains("degenerate"));
}

#[test]
fn identify_reports_unsatisfiable_box() {
    let dir = TempDir::new().unwrap();
    let data = simulate_patient1(&dir);
    let o = globid(&["identify", "--data", path_str(&data), "--box", "1,8,40,50"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error"), "{}", stderr(&o));
}

#[test]
fn identify_warns_on_baseline_mismatch() {
    let dir = TempDir::new().unwrap();
    let data = simulate_patient1(&dir);
    let o = globid(&["identify", "--data", path_str(&data), "--e0", "99.5", "--box", NARROW_BOX, "--max-nodes", "10"]);
    assert!(stderr(&o).contains("differs from y(0)"), "{}", stderr(&o));
}

#[test]
fn node_limit_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    let data = simulate_patient1(&dir);
    let o = globid(&["identify", "--data", path_str(&data), "--max-nodes", "3"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["certificate"], false);
    assert_eq!(r["termination"], "node_limit");
}

#[test]
fn rejects_malformed_flags() {
    for args in [
        vec!["identify", "--data", "x.csv", "--order", "2,2,2"],
        vec!["identify", "--data", "x.csv", "--box", "1,8,40"],
        vec!["landscape", "--data", "x.csv", "--grid", "5", "--out", "y.csv"],
        vec!["verify", "--suite", "everything"],
    ] {
        let o = globid(&args);
        assert!(!o.status.success(), "{args:?}");
    }
}

#[test]
fn landscape_corners_and_subset_argument() {
    let dir = TempDir::new().unwrap();
    let data = simulate_patient1(&dir);
    let out = dir.path().join("land.csv");
    let o = globid(&["landscape", "--data", path_str(&data), "--box", NARROW_BOX, "--grid", "2x2", "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let grid = rows(&out);
    assert_eq!(grid.len(), 4);
    let corners: Vec<(f64, f64)> = grid.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(corners, vec![(2.0, 90.0), (2.0, 100.0), (2.5, 90.0), (2.5, 100.0)]);
    assert!(dir.path().join("land.manifest.json").exists());

    let o = globid(&["landscape", "--data", path_str(&data), "--box", NARROW_BOX, "--grid", "15x15", "--out", path_str(&out)]);
    assert!(o.status.success());
    let h_min = rows(&out).iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
    let o = globid(&["identify", "--data", path_str(&data), "--box", NARROW_BOX]);
    assert!(o.status.success());
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    let ub = r["objective"].as_f64().unwrap();
    assert!(h_min.exp() >= (ub - 1e-12) / (1.0 + 1e-3), "{} < {ub}", h_min.exp());
}

#[test]
fn verify_props_suite_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let o = globid(&["verify", "--suite", "props", "--seed", "1", "--trials", "100", "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5);
    let r = read_json(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["manifest"]["seed"], 1);
}
