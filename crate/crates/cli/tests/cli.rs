use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn forgetbound(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forgetbound"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"
method = "vi"
seeds = [0, 1]
m_train = 200
m_test = 100
checkpoint_stride = 2
[arch]
hidden_dims = [4]
[environment]
kind = "similar"
tasks = 4
[bound]
n_mc = 5
n_mc_prior = 5
"#;

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = forgetbound(&["run", "small.toml", "--out", "out"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("forgetting"));
    assert!(dir.path().join("out/seed_1/metrics.csv").exists());

    let out = forgetbound(&["report", "out"], dir.path());
    assert!(out.status.success());
    assert!(dir.path().join("out/summary.csv").exists());
}

#[test]
fn default_output_directory_is_named_after_the_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL.replace("seeds = [0, 1]", "seeds = [2]")).unwrap();
    let out = forgetbound(&["run", "small.toml"], dir.path());
    assert!(out.status.success());
    assert!(dir.path().join("runs/vi_similar/seed_2/metrics.csv").exists());
}

#[test]
fn bad_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), SMALL.replace("tasks = 4", "tasks = 0")).unwrap();
    let out = forgetbound(&["run", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
    let out = forgetbound(&["run", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_of_an_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = forgetbound(&["report", "."], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradient_verification_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = forgetbound(&["verify", "--scope", "gradients"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("PASS gradients"));
}

#[test]
fn check_space_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let space = r#"{"K": 1.0, "n_hyp": 2, "prior": [0.5, 0.5], "tasks": [
        {"m": 50, "loss_means": [0.1, 0.6]},
        {"m": 50, "loss_means": [0.1, 0.6]}]}"#;
    fs::write(dir.path().join("space.json"), space).unwrap();
    let out = forgetbound(
        &["check-space", "space.json", "--mode", "cor42", "--lambda", "5", "--n-resample", "300"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["holds"], serde_json::Value::Bool(true));
}
