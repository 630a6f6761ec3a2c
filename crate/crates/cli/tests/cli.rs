use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ris_mimo_cli::{sha256_file, EXIT_CONFIG, EXIT_NUMERIC};

const SMALL: [&str; 8] = [
    "--set",
    "n_active=4",
    "--set",
    "n_ris=16",
    "--set",
    "n_users=3",
    "--set",
    "pilot_length=4",
];

fn ris_mimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-mimo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", out.to_str().unwrap(), "--trials", "3", "--draws", "4"];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    ris_mimo(&args)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), &["--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,user,mode,se,se_std_error,q,distance_m,distance_3d_m,angle_deg,beta"
    );
    // 3 trials x 3 users x (2 antennas x 7 modes + 3 baseline modes)
    assert_eq!(lines.count(), 3 * 3 * 17);

    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["resolved_config"]["system"]["n_ris"], 16);
    assert_eq!(manifest["resolved_config"]["experiment"]["seed"], 3);
    for entry in manifest["artifacts"].as_array().unwrap() {
        let name = entry[0].as_str().unwrap();
        assert_eq!(entry[1].as_str().unwrap(), sha256_file(&dir.path().join(name)).unwrap());
    }

    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["trials"], 3);
    assert_eq!(summary["modes"].as_array().unwrap().len(), 17);
    assert_eq!(summary["run"]["training_configs"], 4);
}

#[test]
fn same_seed_same_bytes_other_seed_differs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert!(simulate(a.path(), &["--seed", "9", "--workers", "1"]).status.success());
    assert!(simulate(b.path(), &["--seed", "9", "--workers", "2"]).status.success());
    assert!(simulate(c.path(), &["--seed", "10"]).status.success());
    let read = |d: &Path| fs::read(d.join("results.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_ne!(read(a.path()), read(c.path()));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "[system]\nn_active = 4\nn_ris = 16\n\n[users]\nn_users = 2\n\n[experiment]\nantennas = [\"omni\"]\nbaseline = false\n").unwrap();
    let out_dir = dir.path().join("run");
    let out = ris_mimo(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--trials",
        "2",
        "--draws",
        "3",
        "--set",
        "ris_modes=[\"random\"]",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["config_path"], cfg.to_str().unwrap());
    let rows = fs::read_to_string(out_dir.join("results.csv")).unwrap().lines().count();
    // header + 2 trials x 2 users x 3 modes
    assert_eq!(rows, 1 + 2 * 2 * 3);
}

#[test]
fn configuration_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[system]\nn_riss = 64\n").unwrap();
    let out = ris_mimo(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_riss"));

    let out = ris_mimo(&["simulate", "--out", dir.path().to_str().unwrap(), "--set", "p_max_w=5"]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p_max_dbw"));

    let out = ris_mimo(&["simulate", "--config", "/nonexistent/exp.toml"]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));

    let out = ris_mimo(&["simulate", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn numerical_failures_exit_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    // uplink power so small that every estimate underflows to zero
    let out = simulate(dir.path(), &["--set", "uplink_power_w=1e-320"]);
    assert_eq!(out.status.code(), Some(EXIT_NUMERIC), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trial"));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["status"], "running");
}

#[test]
fn validate_lb_reports_every_term() {
    let mut args = vec!["validate-lb", "--draws", "40000", "--seed", "5"];
    args.extend_from_slice(&SMALL);
    let out = ris_mimo(&args);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    // 3 users x (ds2, bu, 2 interference terms)
    assert_eq!(stdout.lines().filter(|l| l.ends_with("ok")).count(), 12);
}

#[test]
fn optimize_demo_trace_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let out = ris_mimo(&["optimize-demo", "--out", dir.path().to_str().unwrap(), "--seed", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("objective_trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "objective,sweep,element,before,after");
    let mut seen = std::collections::BTreeSet::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        seen.insert(f[0].to_string());
        let before: f64 = f[3].parse().unwrap();
        let after: f64 = f[4].parse().unwrap();
        assert!(after <= before, "{line}");
    }
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec!["f1", "f2"]);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["artifacts"][0][0], "objective_trace.csv");
}
