use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn branchlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_branchlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn gaussian_cov_prints_unit_variance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g.json", r#"{"m": 0.5, "indices": [1], "seed": 0}"#);
    let out_dir = dir.path().join("runs");
    let out = branchlab(&["gaussian-cov", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "1.0\n");
}

#[test]
fn simulate_point_mass_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"distribution": {"kind": "pmf", "table": {"0": 1.0}}, "k": 5, "paths": 60, "seed": 1, "trajectories": 1}"#,
    );
    let root = dir.path().join("runs");
    let out = branchlab(&[
        "simulate",
        "--config",
        &cfg,
        "--seed",
        "9",
        "--paths",
        "30",
        "--out",
        root.to_str().unwrap(),
        "--plot-data",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report_path = String::from_utf8(out.stdout).unwrap();
    let run_dir = Path::new(report_path.trim()).parent().unwrap().to_path_buf();
    assert!(run_dir.file_name().unwrap().to_str().unwrap().starts_with("simulate-"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["config"]["seed"], 9);
    assert_eq!(report["total_paths"], 30);
    assert!(run_dir.join("plot.csv").exists());
    assert_eq!(
        fs::read_to_string(run_dir.join("trajectories.csv")).unwrap(),
        "path,n,X\n0,0,5\n0,1,0\n"
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    let csv = fs::read_to_string(run_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("experiment,statistic,estimate,stderr,target,ratio,verdict\n"));
}

#[test]
fn worker_count_does_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"distribution": {"kind": "bernoulli", "p": 0.5}, "k": 500, "paths": 600, "seed": 4, "levels": [0.1, 0.3]}"#,
    );
    let mut reports = Vec::new();
    for w in ["1", "4"] {
        let root = dir.path().join(format!("w{w}"));
        let out = branchlab(&[
            "coupled",
            "--config",
            &cfg,
            "--workers",
            w,
            "--out",
            root.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let p = String::from_utf8(out.stdout).unwrap();
        reports.push(fs::read(p.trim()).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = write_config(
        dir.path(),
        "a.json",
        r#"{"distribution": {"kind": "bernoulli", "p": 0.5}, "k": 10}"#,
    );
    let out = branchlab(&["simulate", "--config", &no_seed, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let wrong_kind = write_config(dir.path(), "b.json", r#"{"kind": "coupled", "seed": 1}"#);
    let out = branchlab(&["simulate", "--config", &wrong_kind]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("nope.json");
    let out = branchlab(&["simulate", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_reports_ordering_and_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.json",
        r#"{"kind": "invariance", "distribution": {"kind": "bernoulli", "p": 0.5}, "k": [1000], "seed": 1,
            "u1": 0.6, "u2": 0.3, "epsilons": [0.0], "levels": [0.25]}"#,
    );
    let out = branchlab(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("error: u1 < u2 required"), "{text}");
    assert!(text.contains("warning: level a = 0.25"), "{text}");
}

#[test]
fn failing_verdicts_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.json",
        r#"{"m": 0.5, "mode": "paper", "indices": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10], "seed": 0}"#,
    );
    let out = branchlab(&["gaussian-cov", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 10);
}
