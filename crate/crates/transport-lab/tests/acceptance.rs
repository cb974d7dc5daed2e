//! Acceptance suite: every criterion runs end to end at its stated scale
//! and tolerance, printing one pass/fail line (visible with
//! `cargo test --test acceptance -- --nocapture`). The shipped configs pin
//! the scales; the tests assert the pins so silent config edits fail here.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use transport_lab::config::ExperimentConfig;
use transport_lab::experiments::{run_experiment, ExperimentKind, Verdict};
use transport_lab::output::RunWriter;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.toml"));
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("load {name}: {e}"))
}

fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> (Verdict, f64) {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dest = tmp.path().join(kind.id());
    let mut writer = RunWriter::create(&dest).expect("writer");
    let start = Instant::now();
    let verdict = run_experiment(kind, cfg, &mut writer)
        .unwrap_or_else(|e| panic!("{} failed to run: {e}", kind.id()));
    let secs = start.elapsed().as_secs_f64();
    writer.finalize().expect("finalize");
    (verdict, secs)
}

/// Panics with the failing assertions listed; returns the measured map on
/// success.
fn require(v: &Verdict, names: &[&str]) {
    for name in names {
        let a = v
            .assertions
            .iter()
            .find(|a| a.name == *name || a.name.starts_with(*name))
            .unwrap_or_else(|| panic!("verdict lacks assertion {name}: {v:?}"));
        assert!(
            a.passed,
            "criterion assertion failed: {} — {} measured={}",
            a.name, a.detail, a.measured
        );
    }
}

fn criterion_line(n: usize, what: &str, secs: f64) {
    println!("criterion {n}: PASS — {what} ({secs:.1}s)");
}

static NOISE_RUN: OnceLock<(Verdict, f64)> = OnceLock::new();

fn noise_run() -> &'static (Verdict, f64) {
    NOISE_RUN.get_or_init(|| {
        let cfg = config("noise-suite");
        // Pinned scale: 1e5 paths, 256 steps, unit horizon.
        assert_eq!(cfg.noise.paths, 100_000);
        assert_eq!(cfg.grid.steps, 256);
        assert_eq!(cfg.grid.horizon, 1.0);
        run(ExperimentKind::NoiseSuite, &cfg)
    })
}

#[test]
fn criterion_1_stochastic_exponential_suite() {
    let (v, secs) = noise_run();
    require(
        v,
        &[
            "martingale-mean-one[zero]",
            "martingale-mean-one[one]",
            "martingale-mean-one[switch]",
            "positivity[zero]",
            "positivity[one]",
            "positivity[switch]",
            "sde-residual-order-half",
            "negative-control-broken-correction",
        ],
    );
    assert!(*secs <= 60.0, "runtime {secs:.1}s exceeds the 1 min budget");
    criterion_line(
        1,
        "E[F_t] = 1 within 4 SE at every grid time for h in {0, 1, switch}; SDE residual order 1/2 over K in {64, 256, 1024}",
        *secs,
    );
}

#[test]
fn criterion_2_exponential_pairing_identity() {
    let (v, secs) = noise_run();
    require(v, &["exponential-pairing-identity"]);
    assert!(*secs <= 60.0, "runtime {secs:.1}s exceeds the 1 min budget");
    criterion_line(
        2,
        "pairing identity LHS/RHS 3-sigma CIs overlap for Y = B, h = 1, M = 1e5",
        *secs,
    );
}

#[test]
fn criterion_3_mean_regularity_oracle() {
    let cfg = config("meanreg");
    assert_eq!(cfg.noise.paths, 100_000);
    assert_eq!(cfg.grid.cells, 256);
    assert_eq!(cfg.grid.steps, 512);
    assert_eq!(cfg.field.eps, 0.1);
    let (v, secs) = run(ExperimentKind::MeanRegularity, &cfg);
    require(
        &v,
        &[
            "budget-calibration",
            "oracle-agreement[zero+zero]",
            "oracle-agreement[ou+one]",
            "oracle-agreement[sign+switch]",
            "closed-form-cross-check",
            "negative-control-flipped-control",
        ],
    );
    assert!(secs <= 600.0, "runtime {secs:.1}s exceeds the 10 min budget");
    criterion_line(
        3,
        "sup-grid |V_mc - V_solver| <= 4 stderr + calibrated scheme budget on 3 probe pairs, M = 1e5",
        secs,
    );
}

#[test]
fn criterion_4_weak_residual_vanishing() {
    let cfg = config("existence");
    assert_eq!(cfg.grid.steps, 512, "K levels pinned to {{128, 512}}");
    assert!(cfg.noise.paths >= 100);
    let (v, secs) = run(ExperimentKind::Existence, &cfg);
    require(
        &v,
        &[
            "weak-residual-order[const:0.5]",
            &format!("weak-residual-order[{}]", cfg.field.drift),
            "negative-control-dropped-laplacian",
            "uniform-linf-bound",
            "cauchy-pairing-decay",
        ],
    );
    criterion_line(
        4,
        "weak residual decays at empirical order >= 0.45 across K in {128, 512}; dropped-Laplacian control fails by >= 10x",
        secs,
    );
}

#[test]
fn criterion_5_commutator_suite() {
    let cfg = config("commutator-suite");
    assert_eq!(cfg.field.eps_ladder, vec![0.2, 0.1, 0.05, 0.025]);
    let (v, secs) = run(ExperimentKind::CommutatorSuite, &cfg);
    require(
        &v,
        &[
            "constant-field-commutes",
            "ladder-halving[ou/gauss]",
            "ladder-halving[sign/gauss]",
            "negative-control-broken-stencil",
        ],
    );
    assert!(secs <= 120.0, "runtime {secs:.1}s exceeds the 2 min budget");
    criterion_line(
        5,
        "constant-f commutator <= 1e-6; (ou, gauss) and (sign, gauss) ladders halve over {0.2, 0.1, 0.05, 0.025}",
        secs,
    );
}

#[test]
fn criterion_6_energy_gronwall_suite() {
    let cfg = config("uniqueness");
    let (v, secs) = run(ExperimentKind::UniquenessEnergy, &cfg);
    require(
        &v,
        &[
            "zero-data-stays-zero",
            "gronwall-bound[zero]",
            "gronwall-bound[ou]",
            &format!("gronwall-bound[{}]", cfg.field.drift),
            "negative-control-injected-source",
        ],
    );
    criterion_line(
        6,
        "max principle on every solver run; measured Gronwall constant below exp((|b|^2+1) T); zero data stays zero",
        secs,
    );
}

#[test]
fn criterion_7_selection_principle() {
    let cfg = config("selection");
    assert_eq!(cfg.field.eps_ladder, vec![0.2, 0.1, 0.05]);
    assert_eq!(cfg.field.mollifier, "bump");
    assert_eq!(cfg.field.mollifier_b, "gauss");
    assert_eq!(cfg.field.drift, "sign");
    let (v, secs) = run(ExperimentKind::Selection, &cfg);
    require(
        &v,
        &[
            "difference-bound[eps=0.2]",
            "difference-bound[eps=0.1]",
            "difference-bound[eps=0.05]",
            "terminal-halving-solver",
            "terminal-halving-mc",
            "negative-control-independent-noise",
        ],
    );
    assert!(secs <= 900.0, "runtime {secs:.1}s exceeds the 15 min budget");

    // The deterministic contrast records the non-decaying floor near the
    // origin for the same drift with zero noise.
    let contrast_cfg = config("contrast");
    let (cv, csecs) = run(ExperimentKind::Contrast, &contrast_cfg);
    require(
        &cv,
        &["expanding-floor-persists", "stochastic-decay-cross-reference"],
    );
    criterion_line(
        7,
        "two-family difference bound at every rung, terminal halving, and the zero-noise floor recorded",
        secs + csecs,
    );
}

#[test]
fn criterion_8_reproducibility() {
    // Identical config + seed through the CLI binary twice: byte-identical
    // run directories modulo the manifest timestamp.
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg_path = tmp.path().join("mini.toml");
    std::fs::write(
        &cfg_path,
        r#"
[grid]
half_width = 3.0
cells = 128
steps = 128
horizon = 0.5
snapshots = 16

[field]
drift = "sign"
u0 = "gauss"
mollifier = "bump"
eps = 0.2

[noise]
paths = 2000
seed = 42
"#,
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_transport-lab");
    let start = Instant::now();
    let mut dirs = Vec::new();
    for tag in ["a", "b"] {
        let out = tmp.path().join(format!("run-{tag}"));
        let status = std::process::Command::new(bin)
            .args([
                "run",
                "meanreg",
                cfg_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .stdout(std::process::Stdio::null())
            .status()
            .expect("spawn binary");
        assert!(status.success(), "mini meanreg run failed");
        dirs.push(out);
    }
    let mut names: Vec<String> = std::fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.contains(&"verdict.json".to_string()));
    assert!(names.iter().any(|n| n.ends_with(".csv")));
    for name in &names {
        let a = std::fs::read(dirs[0].join(name)).unwrap();
        let b = std::fs::read(dirs[1].join(name)).unwrap();
        if name == "manifest.json" {
            // The manifest records the invocation: timestamp and target
            // directory differ by construction; everything else must match.
            let normalize = |bytes: &[u8]| {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                v["timestamp"] = serde_json::Value::Null;
                v["out_dir"] = serde_json::Value::Null;
                v["config_path"] = serde_json::Value::Null;
                v
            };
            assert_eq!(
                normalize(&a),
                normalize(&b),
                "manifest differs beyond invocation fields"
            );
        } else {
            assert_eq!(a, b, "file {name} differs between identical runs");
        }
    }
    criterion_line(
        8,
        "re-run with identical config+seed is byte-identical modulo the manifest timestamp",
        start.elapsed().as_secs_f64(),
    );
}
