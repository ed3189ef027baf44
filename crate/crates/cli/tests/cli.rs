//! End-to-end runs of the `smjd` binary against the shipped configs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn smjd(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smjd"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn check_accepts_moderate_drift() {
    let dir = TempDir::new().unwrap();
    let o = smjd(&["check"], &configs().join("single_jump_mu08.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("A2: pass"));
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["exit_code"], 0);
    assert!(dir.path().join("check.json").exists());
}

#[test]
fn check_rejects_excessive_drift() {
    let dir = TempDir::new().unwrap();
    let o = smjd(&["check"], &configs().join("single_jump_mu15.json"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("A2: fail"));
    let report = read_json(&dir.path().join("check.json"));
    assert_eq!(report["a2"]["passed"], false);
}

#[test]
fn integral_price_matches_black_scholes() {
    let dir = TempDir::new().unwrap();
    let o = smjd(&["price", "--method", "ie"], &configs().join("black_scholes.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = read_json(&dir.path().join("summary.json"));
    let price = summary["price"].as_f64().unwrap();
    // closed-form value for s = K = 100, r = 0.05, sigma = 0.2, one year
    let exact = 10.450583572185565;
    assert!((price / exact - 1.0).abs() < 5e-3, "{price} vs {exact}");
    assert!(dir.path().join("surface.csv").exists());
}

#[test]
fn missing_model_file_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{"model_file": "nowhere/model.json", "payoff": {"kind": "call", "K1": 100.0}}"#).unwrap();
    let o = smjd(&["check"], &config, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("model.json"), "{}", stderr(&o));
}

#[test]
fn reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let config = configs().join("black_scholes.json");
    for (dir, threads) in [(&a, "1"), (&b, "2")] {
        let o = smjd(&["price", "--method", "mc-q", "--threads", threads], &config, dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let o = smjd(&["simulate"], &config, dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["summary.json", "paths/path_0001.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn xval_reports_disagreement_under_tight_tolerance() {
    let dir = TempDir::new().unwrap();
    let model = fs::read_to_string(configs().join("models/black_scholes.json")).unwrap();
    fs::write(dir.path().join("model.json"), model).unwrap();
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        r#"{
  "model_file": "model.json",
  "payoff": {"kind": "call", "K1": 100.0},
  "grid": {"n_t": 20, "n_s": 121},
  "mc": {"n_paths": 2000},
  "xval": {"ie_fd_rel_tol": 1e-9}
}"#,
    )
    .unwrap();
    let o = smjd(&["xval"], &config, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}{}", stdout(&o), stderr(&o));
    assert!(dir.path().join("out/xval.json").exists());
}
