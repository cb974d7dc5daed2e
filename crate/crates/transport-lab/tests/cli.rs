//! CLI contract tests: exit codes, catalog listing, id round-trips, and the
//! no-partial-output guarantee.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_transport-lab")
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(bin()).args(args).output().expect("spawn cli");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn passing_run_exits_zero_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("comm");
    let cfg = configs_dir().join("commutator-suite.toml");
    let (code, stdout, _) = run_cli(&[
        "run",
        "commutator-suite",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stdout: {stdout}");
    for file in ["verdict.json", "manifest.json", "config.toml", "commutator_ladder.csv"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    assert!(stdout.contains("PASS"));
}

#[test]
fn malformed_config_exits_two_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("broken.toml");
    std::fs::write(&cfg, "[grid]\ncells = \"many\"\n").unwrap();
    let out = tmp.path().join("never");
    let (code, _, stderr) = run_cli(&[
        "run",
        "noise-suite",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("config error"));
    assert!(!out.exists(), "no output directory may appear on config failure");
}

#[test]
fn invalid_override_exits_two() {
    let cfg = configs_dir().join("noise-suite.toml");
    let (code, _, stderr) = run_cli(&[
        "run",
        "noise-suite",
        cfg.to_str().unwrap(),
        "--eps-ladder",
        "0.1,0.2",
    ]);
    assert_eq!(code, 2, "increasing ladder must be rejected: {stderr}");
}

#[test]
fn existing_output_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("occupied");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = configs_dir().join("commutator-suite.toml");
    let (code, _, stderr) = run_cli(&[
        "run",
        "commutator-suite",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{stderr}");
}

#[test]
fn unknown_experiment_exits_two() {
    let cfg = configs_dir().join("default.toml");
    let (code, _, _) = run_cli(&["run", "bogus", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn list_shows_catalog_with_divergence_flags() {
    let (code, stdout, _) = run_cli(&["list"]);
    assert_eq!(code, 0);
    let drift_lines: Vec<&str> = stdout
        .lines()
        .skip_while(|l| !l.starts_with("drifts:"))
        .skip(1)
        .take_while(|l| l.starts_with("  "))
        .collect();
    assert!(drift_lines.len() >= 6, "catalog: {drift_lines:?}");
    assert!(stdout.contains("distributional"));
    assert!(stdout.contains("sign"));
    assert!(stdout.contains("initial data:"));
    assert!(stdout.contains("mollifiers:"));
}

#[test]
fn listed_ids_round_trip_through_overrides() {
    // Every listed 1-d drift id must be accepted end to end by cmd_run
    // overrides; 2-d ids are accepted by validation against a 2-d config.
    let (_, stdout, _) = run_cli(&["list"]);
    let ids: Vec<String> = stdout
        .lines()
        .skip_while(|l| !l.starts_with("drifts:"))
        .skip(1)
        .take_while(|l| l.starts_with("  "))
        .map(|l| l.trim().split_whitespace().next().unwrap().to_string())
        .collect();
    assert!(ids.len() >= 6);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("commutator-suite.toml");
    for id in &ids {
        if id.ends_with('2') {
            // d = 2 member: round-trip through validate on a 2-d config.
            let cfg2 = tmp.path().join(format!("{}.toml", id));
            std::fs::write(
                &cfg2,
                format!(
                    r#"
[grid]
half_width = 3.0
cells = 64
steps = 32
horizon = 0.5
snapshots = 8
dim = 2

[field]
drift = "{id}"
u0 = "gauss2"
mollifier = "bump"
eps = 0.4

[noise]
paths = 500
seed = 1
"#
                ),
            )
            .unwrap();
            let (code, _, stderr) = run_cli(&["validate", cfg2.to_str().unwrap()]);
            assert_eq!(code, 0, "id {id} rejected: {stderr}");
        } else {
            let out = tmp.path().join(format!("run-{}", id.replace(':', "-")));
            let (code, _, stderr) = run_cli(&[
                "run",
                "commutator-suite",
                cfg.to_str().unwrap(),
                "--drift",
                id,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, 0, "id {id} rejected: {stderr}");
        }
    }
}

#[test]
fn validate_prints_stable_hash() {
    let cfg = configs_dir().join("default.toml");
    let (code, out1, _) = run_cli(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (_, out2, _) = run_cli(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out1, out2);
    assert!(out1.trim().starts_with("ok "));
    assert_eq!(out1.trim().len(), "ok ".len() + 64, "sha-256 hex expected");
}

#[test]
fn failing_verdict_exits_one_with_outputs() {
    // An over-tight ladder factor forces an assertion failure; the verdict
    // and data files must still be published, exit code 1.
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("tight.toml");
    std::fs::write(
        &cfg_path,
        r#"
[grid]
half_width = 3.0
cells = 1024
steps = 64
horizon = 1.0
snapshots = 16

[field]
drift = "sign"
u0 = "gauss"
mollifier = "bump"
eps = 0.2
eps_ladder = [0.2, 0.19]

[noise]
paths = 500
seed = 1

[tolerances]
ladder_factor = 0.05
"#,
    )
    .unwrap();
    let out = tmp.path().join("tight-run");
    let (code, stdout, _) = run_cli(&[
        "run",
        "commutator-suite",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "{stdout}");
    assert!(stdout.contains("FAIL"));
    assert!(out.join("verdict.json").exists());
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["passed"], serde_json::Value::Bool(false));
}

#[test]
fn run_rejects_clobbering_but_allows_fresh_sibling() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("commutator-suite.toml");
    let out = tmp.path().join("first");
    let (code, _, _) = run_cli(&[
        "run",
        "commutator-suite",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    // no stray staging directories next to the published run
    let stray: Vec<_> = std::fs::read_dir(tmp.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with(".tmp-")
        })
        .collect();
    assert!(stray.is_empty(), "staging directories left behind");
    assert!(Path::new(&out).exists());
}
