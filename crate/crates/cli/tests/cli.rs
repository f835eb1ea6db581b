use std::path::PathBuf;
use std::process::{Command, Output};

fn webca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_webca"))
        .args(args)
        .output()
        .unwrap()
}

fn reference() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/reference.toml")
        .display()
        .to_string()
}

#[test]
fn validate_config_accepts_reference() {
    let out = webca(&["validate-config", "--config", &reference()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(reference()).unwrap();
    std::fs::write(
        &path,
        text.replacen("neuron_count = 16", "neuron_count = 40", 1),
    )
    .unwrap();
    let out = webca(&["validate-config", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("size ordering"));
}

#[test]
fn missing_config_exits_with_one() {
    let out = webca(&["run", "--config", "/nonexistent/webca.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = webca(&[
        "run",
        "--config",
        &reference(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);
    assert!(csv.starts_with("tick,time,context"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["ticks"], 200);
}
