//! End-to-end checks of the command-line binary: exit codes, printed check
//! lines, and byte-level reproducibility of artifacts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchdiff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const MODEL_BLOCK: &str = r#"
[model]
m = 2
distortions = [1.0, 0.5]

[model.drift]
kind = "linear-exchange"
s = [[0.0, 1.0], [1.0, 0.0]]
"#;

#[test]
fn validate_prints_all_six_checks_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.toml", MODEL_BLOCK);
    let out_dir = dir.path().join("out");

    let out = run(&["validate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for name in [
        "distortions",
        "conservation",
        "boundary-sign",
        "strict-inflow",
        "fixed-corners",
        "population-scale",
    ] {
        assert!(stdout.contains(&format!("PASS {name}")), "missing {name} in: {stdout}");
    }
    assert!(out_dir.join("manifest_validate_0.json").is_file());
    assert!(out_dir.join("report_validate_0.json").is_file());
}

#[test]
fn missing_required_parameter_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{MODEL_BLOCK}\n[params]\nx0 = [0.05, 0.05]\n");
    let cfg = write_config(dir.path(), "cfg.toml", &body);

    let out = run(&["bound-check", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("alpha"), "stderr: {stderr}");
}

#[test]
fn unknown_experiment_name_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.toml", MODEL_BLOCK);

    let out = run(&["frobnicate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown experiment"), "stderr: {stderr}");
}

#[test]
fn same_seed_reproduces_trajectory_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{MODEL_BLOCK}\n[params]\nx0 = [0.3, 0.6]\nt_max = 1.0\ndt = 0.001\n"
    );
    let cfg = write_config(dir.path(), "cfg.toml", &body);

    let mut artifacts = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = run(&[
            "simulate-sde",
            "--config",
            &cfg,
            "--seed",
            "9",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        artifacts.push(fs::read(out_dir.join("trajectory_simulate-sde_9.csv")).unwrap());
    }
    assert_eq!(artifacts[0], artifacts[1]);
    assert!(!artifacts[0].is_empty());
}

#[test]
fn cli_seed_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("master_seed = 3\n{MODEL_BLOCK}");
    let cfg = write_config(dir.path(), "cfg.toml", &body);
    let out_dir = dir.path().join("out");

    let out = run(&[
        "validate",
        "--config",
        &cfg,
        "--seed",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out_dir.join("manifest_validate_4.json").is_file());
}
