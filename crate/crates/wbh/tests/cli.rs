use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

fn wbh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbh")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn csv(rows: &[Vec<f64>]) -> String {
    rows.iter()
        .map(|r| r.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

#[test]
fn calibrate_identity() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = write(dir.path(), "sigma.csv", &csv(&identity(10)));
    let v = json(&wbh(&["calibrate", "--sigma", sigma.to_str().unwrap(), "--alpha", "0.05", "--mode", "z"]));
    assert_eq!(v["schema_version"], 1);
    assert!((v["alpha1"].as_f64().unwrap() - 0.005).abs() < 1e-15);
    assert_eq!(v["critical_constants"].as_array().unwrap().len(), 10);
    assert!(v["residual"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn calibrate_equicorrelated_pair() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = write(dir.path(), "sigma.csv", "x1,x2\n1,0.5\n0.5,1\n");
    let v = json(&wbh(&["calibrate", "--sigma", sigma.to_str().unwrap(), "--alpha", "0.05", "--mode", "t", "--m", "8"]));
    for w in v["weights"].as_array().unwrap() {
        assert!((w.as_f64().unwrap() - 0.75).abs() < 1e-15);
    }
    assert_eq!(v["method"], "t(m=8)");
}

#[test]
fn non_positive_definite_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = write(dir.path(), "sigma.csv", "1,2,0\n2,1,0\n0,0,1\n");
    let out = wbh(&["calibrate", "--sigma", sigma.to_str().unwrap(), "--alpha", "0.05", "--mode", "z"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pivot 1"), "{err}");
}

#[test]
fn unreachable_calibration_exits_3() {
    // w = 1 - 0.9995^2 ≈ 1e-3 pushes the z-method base constant below 1e-300.
    let dir = tempfile::tempdir().unwrap();
    let sigma = write(dir.path(), "sigma.csv", "1,0.9995\n0.9995,1\n");
    let out = wbh(&["calibrate", "--sigma", sigma.to_str().unwrap(), "--alpha", "0.05", "--mode", "z"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = write(dir.path(), "sigma.csv", &csv(&identity(3)));
    let stats = write(dir.path(), "x.csv", "1,2,3\n");
    let s = sigma.to_str().unwrap();
    let x = stats.to_str().unwrap();
    // Missing scale statistic in t mode.
    let out = wbh(&["test", "--sigma", s, "--stats", x, "--alpha", "0.05", "--mode", "t", "--m", "5"]);
    assert_eq!(out.status.code(), Some(2));
    // Level outside (0, 1).
    let out = wbh(&["calibrate", "--sigma", s, "--alpha", "1.5", "--mode", "z"]);
    assert_eq!(out.status.code(), Some(2));
    // Missing file.
    let out = wbh(&["calibrate", "--sigma", "/nonexistent/sigma.csv", "--alpha", "0.05", "--mode", "z"]);
    assert_eq!(out.status.code(), Some(2));
    // Length mismatch.
    let short = write(dir.path(), "short.csv", "1,2\n");
    let out = wbh(&["test", "--sigma", s, "--stats", short.to_str().unwrap(), "--alpha", "0.05", "--mode", "z"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn test_zero_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = write(dir.path(), "sigma.csv", "2,0.3\n0.3,1\n");
    let stats = write(dir.path(), "x.csv", "0\n0\n");
    let s = sigma.to_str().unwrap();
    let x = stats.to_str().unwrap();
    let v = json(&wbh(&["test", "--sigma", s, "--stats", x, "--alpha", "0.05", "--mode", "z"]));
    assert!(v["rejected"].as_array().unwrap().is_empty());
    assert!(v["threshold"].is_null());
    let v = json(&wbh(&["test", "--sigma", s, "--stats", x, "--alpha", "0.05", "--mode", "t", "--m", "4", "--v", "4"]));
    assert!(v["rejected"].as_array().unwrap().is_empty());
}

#[test]
fn test_strong_signal() {
    let dir = tempfile::tempdir().unwrap();
    let sigma = write(dir.path(), "sigma.csv", "1,0.5,0.5\n0.5,1,0.5\n0.5,0.5,1\n");
    let stats = write(dir.path(), "x.csv", "0.1,-6,0.4\n");
    let v = json(&wbh(&[
        "test", "--sigma", sigma.to_str().unwrap(), "--stats", stats.to_str().unwrap(), "--alpha", "0.05", "--mode", "z",
    ]));
    assert_eq!(v["rejected"], serde_json::json!([1]));
}

#[test]
fn select_overwhelming_signal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, d) = (50, 10);
    let mut design = Vec::new();
    let mut response = Vec::new();
    for _ in 0..n {
        let f: f64 = StandardNormal.sample(&mut rng);
        let row: Vec<f64> = (0..d)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                0.6 * f + e
            })
            .collect();
        let e: f64 = StandardNormal.sample(&mut rng);
        response.push(vec![10.0 * row[3] - 10.0 * row[8] + e]);
        design.push(row);
    }
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.csv", &csv(&design));
    let y = write(dir.path(), "y.csv", &format!("y\n{}", csv(&response)));
    let v = json(&wbh(&["select", "--design", x.to_str().unwrap(), "--response", y.to_str().unwrap(), "--alpha", "0.05"]));
    assert_eq!(v["selected"], serde_json::json!([3, 8]));
    assert_eq!(v["dof"], 40);
}

#[test]
fn select_rejects_square_design() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.csv", &csv(&identity(3)));
    let y = write(dir.path(), "y.csv", "1,2,3\n");
    let out = wbh(&["select", "--design", x.to_str().unwrap(), "--response", y.to_str().unwrap(), "--alpha", "0.05"]);
    assert_eq!(out.status.code(), Some(2));
}

const SCENARIOS: &str = r#"{
  "schema_version": 1,
  "scenarios": [
    {"model": {"kind": "means", "dimension": 6,
               "covariance": {"type": "random_pd", "seed": 4},
               "nulls": {"first": 3}, "method": {"t": {"m": 10}}},
     "alpha": 0.1},
    {"model": {"kind": "regression", "observations": 30,
               "design": {"type": "random", "rho": 0.4, "seed": 2},
               "coefficients": [0, 1, 0, 0, -1]},
     "alpha": 0.05}
  ],
  "grid": {"dimensions": [8], "rhos": [-0.1, 0.5], "null_fractions": [1.0, 0.5],
           "methods": ["z"], "alpha": 0.05}
}"#;

#[test]
fn simulate_is_identical_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "scenarios.json", SCENARIOS);
    let f = file.to_str().unwrap();
    for format in ["tsv", "json"] {
        let run = |workers: &str| {
            let out = wbh(&["simulate", "--scenario", f, "--reps", "10000", "--seed", "11", "--workers", workers, "--format", format]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            out.stdout
        };
        let one = run("1");
        assert_eq!(one, run("8"));
        assert_eq!(one, run("3"));
    }
}

#[test]
fn simulate_tsv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "scenarios.json", SCENARIOS);
    let out = wbh(&["simulate", "--scenario", file.to_str().unwrap(), "--reps", "200", "--seed", "1", "--format", "tsv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0].split('\t').count(), 11);
    assert_eq!(lines.len(), 1 + 2 + 4);
    for line in &lines[1..] {
        assert_eq!(line.split('\t').count(), 11);
    }
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("wall time"));
    assert!(!text.contains("wall"));
}

#[test]
fn simulate_json_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "scenarios.json", SCENARIOS);
    let report = dir.path().join("report.json");
    let out = wbh(&[
        "simulate", "--scenario", file.to_str().unwrap(), "--reps", "300", "--seed", "2",
        "--output", report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 6);
    assert_eq!(reports[0]["direct"]["replications"], 300);
    assert!(reports[0]["valid"].as_bool().unwrap());
}

#[test]
fn simulate_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"schema_version": 1, "grid": {"dimensions": [4], "rhos": [-0.5], "null_fractions": [1.0], "methods": ["z"], "alpha": 0.05}}"#);
    let out = wbh(&["simulate", "--scenario", bad.to_str().unwrap(), "--reps", "10", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let broken = write(dir.path(), "broken.json", "{");
    let out = wbh(&["simulate", "--scenario", broken.to_str().unwrap(), "--reps", "10", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let good = write(dir.path(), "good.json", SCENARIOS);
    let out = wbh(&["simulate", "--scenario", good.to_str().unwrap(), "--reps", "0", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
