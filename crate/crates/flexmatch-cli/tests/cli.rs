//! Black-box tests of the command-line contract: exit codes, config
//! precedence, atomic output, determinism across thread counts.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flexmatch"))
}

#[test]
fn simulate_zero_budget_zero_alpha_gives_zero_mean() {
    let out = bin()
        .args([
            "simulate", "--alpha", "0", "--alpha-f", "1", "--B", "0", "--n", "50",
            "--replicates", "20", "--seed", "1", "--metric", "mu",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let mean: f64 = row.split(',').nth(7).unwrap().parse().unwrap();
    assert_eq!(mean, 0.0, "row: {row}");
}

#[test]
fn missing_required_parameter_is_a_validation_error() {
    let out = bin().arg("simulate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"command":"phi","alhpa":0.3}"#).unwrap();
    let out = bin().args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_empty_region_emits_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.json");
    std::fs::write(
        &cfg,
        r#"{"command":"verify","delta":0.1,"alpha_min":0.001,"alpha_max":0.05,
            "alpha_f_min":1.0,"alpha_f_max":1.05}"#
            .replace('\n', ""),
    )
    .unwrap();
    let out = bin().args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.trim(),
        "alpha,alpha_f,delta,eps,lower_bound_gap,verdict"
    );
}

#[test]
fn coupling_fault_injection_exits_with_certificate_violation() {
    let out = bin()
        .args([
            "coupling", "--alpha-f", "2", "--n", "20", "--replicates", "5", "--seed", "1",
            "--inject-fault",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("phi.json");
    std::fs::write(
        &cfg,
        r#"{"command":"phi","alpha":0.3,"alpha_f":1.5,"bl":0.5,"br":0.5}"#,
    )
    .unwrap();
    let base = bin().args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    let over = bin()
        .args(["--config", cfg.to_str().unwrap(), "--alpha-f", "2.5"])
        .output()
        .unwrap();
    assert!(base.status.success() && over.status.success());
    assert_ne!(base.stdout, over.stdout);
    let text = String::from_utf8(over.stdout).unwrap();
    assert!(text.contains("\"alpha_f\": 2.5"), "{text}");
}

#[test]
fn out_file_plus_summary_line_and_thread_count_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut artifacts = Vec::new();
    for threads in ["1", "4"] {
        let path = dir.path().join(format!("rows_{threads}.csv"));
        let out = bin()
            .args([
                "simulate", "--alpha", "0.3", "--alpha-f", "1.5", "--B", "1", "--n", "100",
                "--replicates", "100", "--seed", "9", "--metric", "mu", "--threads", threads,
                "--out", path.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        let summary = String::from_utf8(out.stdout).unwrap();
        assert!(summary.trim().starts_with('{') && summary.contains("\"command\""));
        artifacts.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(artifacts[0], artifacts[1], "CSV differs across thread counts");
    // Atomic write leaves no stray temp files next to the artifacts.
    let stray = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            let name = e.as_ref().unwrap().file_name();
            !name.to_string_lossy().ends_with(".csv")
        })
        .count();
    assert_eq!(stray, 0);
}

#[test]
fn ks_reports_fixed_point_json() {
    let out = bin()
        .args(["ks", "--alpha", "0.3", "--alpha-f", "1.5", "--B", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("fixed-point output is JSON");
    assert!(v["mu_ks"].as_f64().unwrap() > 0.0);
    assert!(v["subcritical"].as_bool().unwrap());
}
