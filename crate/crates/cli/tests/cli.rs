use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn branchlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_branchlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const BINARY: &str = r#"{"family":"explicit","pmf":[0.5,0,0.5]}"#;

fn sample_config(count: u64) -> String {
    format!(
        r#"{{"seed": 7, "experiment": {{"kind": "sample", "offspring": {BINARY},
            "sampler": {{"kind": "immortal_prefix", "b": 3}}, "count": {count}}}}}"#
    )
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", &sample_config(500));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, workers) in [(&a, "1"), (&b, "3")] {
        let o = branchlab(&["sample", "--config", &cfg, "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(&a.join("samples.csv")), read(&b.join("samples.csv")));
    let csv = String::from_utf8(read(&a.join("samples.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 501);
    assert!(csv.starts_with("index,tree,vertices,height,width\n"));

    let manifest: Value = serde_json::from_slice(&read(&a.join("manifest.json"))).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["command"], "sample");
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|v| v == "samples.csv"));
    assert!(fs::read_dir(&a).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().starts_with('.')));
}

#[test]
fn seed_override_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", &sample_config(200));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(branchlab(&["sample", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(branchlab(&["sample", "--config", &cfg, "--seed", "8", "--out", b.to_str().unwrap()]).status.success());
    assert_ne!(read(&a.join("samples.csv")), read(&b.join("samples.csv")));
    let manifest: Value = serde_json::from_slice(&read(&b.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 8);
    assert_eq!(manifest["config"]["seed"], 8);
}

#[test]
fn malformed_configs_exit_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        ("syntax.json", "{\"seed\": 1,".to_string()),
        ("unknown.json", sample_config(10).replacen("\"count\"", "\"colour\": 1, \"count\"", 1)),
        ("seedless.json", sample_config(10).replacen("\"seed\": 7,", "", 1)),
        (
            "pmf.json",
            sample_config(10).replacen(BINARY, r#"{"family":"explicit","pmf":[0.5,0.6]}"#, 1),
        ),
    ];
    for (name, body) in cases {
        let cfg = write_config(dir.path(), name, &body);
        let o = branchlab(&["sample", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{name} left an output directory");
    }
    // A config for another subcommand is rejected the same way.
    let cfg = write_config(dir.path(), "s.json", &sample_config(10));
    let o = branchlab(&["exact", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn exhausted_budget_exits_3_with_a_diagnostic_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"seed": 3, "experiment": {{"kind": "sample", "offspring": {BINARY},
            "sampler": {{"kind": "conditioned", "functional": {{"kind": "height"}}, "condition": {{"tail": 60}}}},
            "count": 5, "max_attempts": 20}}}}"#
    );
    let cfg = write_config(dir.path(), "c.json", &body);
    let out = dir.path().join("out");
    let o = branchlab(&["sample", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names, ["manifest.json"]);
    let manifest: Value = serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["status"], "budget_exhausted");
    assert!(manifest["error"].as_str().unwrap().contains("attempts"));
}

#[test]
fn exact_tables_match_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"seed": 1, "experiment": {"kind": "exact",
        "offspring": {"family":"geometric","a":0.5}, "functional": {"kind": "height"}, "n_max": 6}}"#;
    let cfg = write_config(dir.path(), "e.json", body);
    let out = dir.path().join("out");
    let o = branchlab(&["exact", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(read(&out.join("tail_table.csv"))).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let tail_col = header.iter().position(|h| *h == "v_n").expect("tail column");
    let n_col = header.iter().position(|h| *h == "n").expect("n column");
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let n: f64 = cells[n_col].parse().unwrap();
        let tail: f64 = cells[tail_col].parse().unwrap();
        // Geometric(1/2) trees exceed height n with probability 1/(n + 2).
        assert!((tail - 1.0 / (n + 2.0)).abs() < 1e-12, "{line}");
    }
}

#[test]
fn acceptance_subcommand_reports_each_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("acc");
    let o = branchlab(&["acceptance", "--only", "7", "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("criterion  7 ")), "{stdout}");
    let report: Value = serde_json::from_slice(&read(&out.join("acceptance.json"))).unwrap();
    assert_eq!(report["criteria"].as_array().unwrap().len(), 1);
}
