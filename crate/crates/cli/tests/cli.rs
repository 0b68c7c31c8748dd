//! End-to-end runs of the `capa` binary.

use std::path::Path;
use std::process::{Command, Output};

fn capa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capa"))
        .args(args)
        .env_remove("CAPA_CONFIG")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

/// `(value, rate)` of every WMMSE row of a sweep CSV.
fn wmmse_rows(csv_text: &str) -> Vec<(f64, f64)> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    r.records()
        .map(|rec| rec.unwrap())
        .filter(|rec| &rec[2] == "wmmse")
        .map(|rec| (rec[1].parse().unwrap(), rec[3].parse().unwrap()))
        .collect()
}

const FAST: &[&str] = &["--method", "wmmse", "--order", "6", "--streams", "4"];

#[test]
fn validate_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = capa(&["validate-config"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let path = dir.path().join("echo.toml");
    std::fs::write(&path, &out.stdout).unwrap();
    let again = capa(&["--config", path.to_str().unwrap(), "validate-config"]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn invalid_field_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(capa(&["validate-config"]).stdout).unwrap();
    let bad = text.replacen("L_x = 0.5", "L_x = -1.0", 1);
    assert_ne!(bad, text);
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, bad).unwrap();
    let out = capa(&["--config", path.to_str().unwrap(), "validate-config"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("tx.L_x"), "{}", stderr(&out));
}

#[test]
fn syntax_error_and_missing_file_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "methods = [\n").unwrap();
    assert_eq!(capa(&["--config", path.to_str().unwrap(), "validate-config"]).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(capa(&["--config", missing.to_str().unwrap(), "validate-config"]).status.code(), Some(2));
}

#[test]
fn config_is_read_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(capa(&["validate-config"]).stdout).unwrap();
    let path = dir.path().join("env.toml");
    std::fs::write(&path, text.replacen("seed = 0", "seed = 77", 1)).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_capa"))
        .arg("validate-config")
        .env("CAPA_CONFIG", &path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed = 77"));
}

#[test]
fn solve_is_deterministic_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let mut args = vec!["solve", "--seed", "5", "--output", out_dir.to_str().unwrap()];
        args.extend_from_slice(FAST);
        args.extend_from_slice(&["--method", "fourier_svd"]);
        let out = capa(&args);
        assert!(out.status.success(), "{}", stderr(&out));
        let header = read(&out_dir.join("solve.csv")).lines().next().unwrap().to_string();
        assert_eq!(header, "sweep_var,value,method,rate_bits,iters,wall_ms,status");
        let mut json: serde_json::Value = serde_json::from_str(&read(&out_dir.join("wmmse.json"))).unwrap();
        json.as_object_mut().unwrap().remove("wall_ms");
        reports.push(json);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn numeric_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = capa(&["solve", "--method", "dense_optimal", "--frequency", "15e9", "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let target = blocker.join("sub");
    let mut args = vec!["solve", "--output", target.to_str().unwrap()];
    args.extend_from_slice(FAST);
    assert_eq!(capa(&args).status.code(), Some(1));
}

#[test]
fn rate_falls_with_distance() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--var", "distance", "--start", "2", "--stop", "50", "--steps", "6", "--output", dir.path().to_str().unwrap()];
    args.extend_from_slice(FAST);
    let out = capa(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = wmmse_rows(&read(&dir.path().join("sweep.csv")));
    assert_eq!(rows.len(), 6);
    assert!(rows.windows(2).all(|w| w[0].0 < w[1].0 && w[1].1 < w[0].1), "{rows:?}");
}

#[test]
fn rate_rises_with_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--var", "frequency", "--start", "2.4e9", "--stop", "7.8e9", "--steps", "4", "--jobs", "2", "--output", dir.path().to_str().unwrap()];
    args.extend_from_slice(&["--method", "wmmse", "--order", "8", "--streams", "4"]);
    let out = capa(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = wmmse_rows(&read(&dir.path().join("sweep.csv")));
    assert_eq!(rows.len(), 4);
    assert!(rows.windows(2).all(|w| w[1].1 > w[0].1), "{rows:?}");
}

fn bench_cell(dir: &Path, iterations: &str) -> (f64, f64) {
    let out = capa(&[
        "bench", "--frequencies", "2.4e9", "--areas", "0.25", "--repeats", "7", "--iterations", iterations,
        "--bench-streams", "4", "--order", "8", "--output", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = read(&dir.join("bench_cells.csv"));
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rec = r.records().map(|x| x.unwrap()).find(|rec| &rec[2] == "wmmse").unwrap();
    (rec[3].parse().unwrap(), rec[4].parse().unwrap())
}

#[test]
fn bench_timing_is_stable_and_scales_with_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let (full_ms, cv) = bench_cell(dir.path(), "60");
    assert!(cv < 0.2, "coefficient of variation {cv}");
    let header = read(&dir.path().join("bench.csv")).lines().next().unwrap().to_string();
    assert_eq!(header, "frequency_hz,wmmse_A0.25_ms,fourier_svd_A0.25_ms");
    let (one_ms, _) = bench_cell(dir.path(), "1");
    assert!(one_ms < full_ms / 10.0, "1 iteration {one_ms} ms vs 60 iterations {full_ms} ms");
}
