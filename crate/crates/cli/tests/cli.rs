use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn combust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_combust"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Paths printed on stdout, one per line.
fn written(o: &Output) -> Vec<PathBuf> {
    String::from_utf8_lossy(&o.stdout).lines().map(PathBuf::from).collect()
}

fn with_ext(paths: &[PathBuf], ext: &str) -> PathBuf {
    paths.iter().find(|p| p.extension().is_some_and(|e| e == ext)).cloned().expect("artifact written")
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn profile(dir: &Path) -> PathBuf {
    let o = combust(&["profile", "--config", s(&config("dc.json")), "--out", s(dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    with_ext(&written(&o), "csv")
}

#[test]
fn rh_reports_two_roots_for_dc_speed() {
    let dir = tempfile::tempdir().unwrap();
    let o = combust(&["rh", "--config", s(&config("dc.json")), "--s", "1.5", "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rep = json(&with_ext(&written(&o), "json"));
    let text = rep["results"].to_string();
    assert!(text.contains("2.366025403784"), "{text}");
    assert!(text.contains("0.633974596215"), "{text}");
}

#[test]
fn evans_without_profile_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = combust(&["evans", "--config", s(&config("dc.json")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("profile required"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("dc.json")).unwrap().replacen("\"q\"", "\"qq\": 1, \"q\"", 1);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text).unwrap();
    let o = combust(&["profile", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("qq"), "{}", stderr(&o));
}

#[test]
fn empty_sweep_range_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = combust(&[
        "sweep", "--config", s(&config("dc.json")), "--axis", "q", "--min", "0.5", "--max", "0.1", "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_point_sweep_matches_verdict_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let p = profile(dir.path());
    let o = combust(&["verdict", "--config", s(&config("dc.json")), "--profile", s(&p), "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&with_ext(&written(&o), "json"));
    assert_eq!(v["results"]["verdict"], "stable");
    let rep = &v["results"]["report"];

    let o = combust(&[
        "sweep", "--config", s(&config("dc.json")), "--axis", "q", "--min", "0.5", "--max", "0.5", "--points", "1",
        "--out", s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(with_ext(&written(&o), "csv")).unwrap();
    let h = r.headers().unwrap().clone();
    let row = r.records().next().unwrap().unwrap();
    let col = |n: &str| row.get(h.iter().position(|c| c == n).unwrap()).unwrap().to_string();
    assert_eq!(col("verdict"), "stable");
    let bits = |t: String| t.parse::<f64>().unwrap().to_bits();
    assert_eq!(bits(col("gamma")), rep["gamma"].as_f64().unwrap().to_bits());
    assert_eq!(bits(col("d_prime_re")), rep["d_prime_zero"][0].as_f64().unwrap().to_bits());
    assert_eq!(col("origin_winding"), "1");
    assert_eq!(col("outer_winding"), "0");
}

#[test]
fn reports_are_deterministic_under_source_date_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        let o = Command::new(env!("CARGO_BIN_EXE_combust"))
            .args(["cj", "--config", s(&config("dc.json")), "--out", s(dir.path())])
            .env("SOURCE_DATE_EPOCH", "1700000000")
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(with_ext(&written(&o), "json")).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["provenance"]["timestamp"], 1700000000);
}

#[test]
fn short_evolve_writes_trajectory_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = profile(dir.path());
    let o = combust(&[
        "evolve", "--config", s(&config("dc.json")), "--profile", s(&p), "--T", "2", "--snap-every", "0.5", "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let paths = written(&o);
    let rep = json(&with_ext(&paths, "json"));
    assert!(rep["results"]["aborted"].is_null());
    assert!(!rep["results"]["samples"].as_array().unwrap().is_empty());
    let traj = std::fs::read_to_string(with_ext(&paths, "csv")).unwrap();
    assert!(traj.starts_with("t,x,u,z"), "{}", &traj[..40.min(traj.len())]);
}

#[test]
fn green_function_agrees_with_time_stepping() {
    let dir = tempfile::tempdir().unwrap();
    let p = profile(dir.path());
    let o = combust(&[
        "green", "--config", s(&config("dc.json")), "--profile", s(&p), "--check-evolution", "--out", s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rep = json(&with_ext(&written(&o), "json"));
    let c = &rep["results"]["check_evolution"];
    assert_eq!(c["pass"], true, "{c}");
    assert!(c["relative_l1"].as_f64().unwrap() < 5e-3, "{c}");
}
