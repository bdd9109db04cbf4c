use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sepunmix-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, experiment: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_sepunmix"))
        .arg(experiment)
        .arg("--config")
        .arg(&cfg)
        .args(["--seed", "3", "--out"])
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

const SMALL: &str = r#"{
    "n_samples": 400,
    "coherence_shape": {"p": 2, "q": 2},
    "delta_ladder": {"lo": 0.005, "hi": 0.02, "points": 2},
    "realizations": 2,
    "x_grid_resolution": 16
}"#;

#[test]
fn successful_run_writes_csv_and_manifest() {
    let dir = scratch("ok");
    let out = run(&dir, "coherence", SMALL, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let exp = dir.join("out").join("coherence");
    let csv = fs::read_to_string(exp.join("data.csv")).unwrap();
    assert!(csv.starts_with("config,kernel,axis,axis_value,trial,quantity,value\n"));
    assert!(csv.lines().count() > 1);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(exp.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "coherence");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["n_samples"], 400);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn failing_self_check_exits_with_two() {
    let dir = scratch("fault");
    let out = run(&dir, "self-check", r#"{"self_check_fault": "flip_first_derivative"}"#, &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("out/self-check/data.csv").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn passing_self_check_exits_with_zero() {
    let dir = scratch("selfcheck");
    let out = run(&dir, "self-check", "{}", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn configuration_errors_exit_with_three() {
    let dir = scratch("config");
    for (experiment, config, extra) in [
        ("coherence", r#"{"x_min": 0.2, "x_max": 0.1}"#, &[][..]),
        ("coherence", r#"{"no_such_field": 1}"#, &[]),
        ("coherence", "not json", &[]),
        ("no-such-experiment", "{}", &[]),
        ("coherence", "{}", &["--scale", "huge"]),
    ] {
        let out = run(&dir, experiment, config, extra);
        assert_eq!(out.status.code(), Some(3), "{experiment} {config} {extra:?}");
    }
    fs::remove_dir_all(&dir).unwrap();
}
