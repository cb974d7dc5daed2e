//! Command-line entry point: config parsing, experiment dispatch, seeded
//! reproducibility, and emission of plot-ready tables.
//!
//! Exit codes: 0 all assertions pass, 1 an assertion failed or the pipeline
//! hit a numerical error, 2 the config is invalid. Output directories are
//! staged and atomically renamed, so failed runs leave nothing behind.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use transport_lab::config::{ExperimentConfig, RunManifest};
use transport_lab::error::LabError;
use transport_lab::experiments::{run_experiment, ExperimentKind};
use transport_lab::field::{builtin_examples, drift_by_id, u0_catalog};
use transport_lab::output::RunWriter;

#[derive(Parser)]
#[command(
    name = "transport-lab",
    version,
    about = "Numerical laboratory for stochastic transport with irregular drift"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment from a config file and write its run directory.
    Run {
        /// One of: existence, meanreg, uniqueness, selection, contrast,
        /// noise-suite, commutator-suite.
        experiment: String,
        /// TOML config path.
        config: PathBuf,
        /// Override the root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the Monte Carlo path count.
        #[arg(long)]
        paths: Option<usize>,
        /// Override the grid as CELLSxSTEPS, e.g. 256x512.
        #[arg(long)]
        grid: Option<String>,
        /// Override the eps ladder, comma separated, e.g. 0.2,0.1,0.05.
        #[arg(long, value_name = "E1,E2,...")]
        eps_ladder: Option<String>,
        /// Override the drift id.
        #[arg(long)]
        drift: Option<String>,
        /// Override the initial data id.
        #[arg(long)]
        u0: Option<String>,
        /// Output directory (default runs/<experiment>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the drift, initial-data, mollifier, and control catalogs.
    List,
    /// Validate a config file and print its resolved hash.
    Validate { config: PathBuf },
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    paths: Option<usize>,
    grid: Option<String>,
    eps_ladder: Option<String>,
    drift: Option<String>,
    u0: Option<String>,
) -> Result<(), LabError> {
    if let Some(s) = seed {
        cfg.noise.seed = s;
    }
    if let Some(p) = paths {
        cfg.noise.paths = p;
    }
    if let Some(g) = grid {
        let (cells, steps) = g
            .split_once('x')
            .ok_or_else(|| LabError::InvalidConfig(format!("--grid expects CELLSxSTEPS, got {g}")))?;
        cfg.grid.cells = cells
            .parse()
            .map_err(|_| LabError::InvalidConfig(format!("bad cell count in --grid {g}")))?;
        cfg.grid.steps = steps
            .parse()
            .map_err(|_| LabError::InvalidConfig(format!("bad step count in --grid {g}")))?;
    }
    if let Some(ladder) = eps_ladder {
        let parsed: Result<Vec<f64>, _> = ladder.split(',').map(|t| t.trim().parse()).collect();
        cfg.field.eps_ladder = parsed
            .map_err(|_| LabError::InvalidConfig(format!("bad --eps-ladder {ladder}")))?;
    }
    if let Some(d) = drift {
        cfg.field.drift = d;
    }
    if let Some(u) = u0 {
        cfg.field.u0 = u;
    }
    cfg.validate()
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    experiment: String,
    config: PathBuf,
    seed: Option<u64>,
    paths: Option<usize>,
    grid: Option<String>,
    eps_ladder: Option<String>,
    drift: Option<String>,
    u0: Option<String>,
    out: Option<PathBuf>,
) -> ExitCode {
    let kind = match ExperimentKind::parse(&experiment) {
        Some(k) => k,
        None => {
            eprintln!(
                "unknown experiment {experiment:?}; expected one of {}",
                ExperimentKind::ALL
                    .iter()
                    .map(|k| k.id())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            return ExitCode::from(2);
        }
    };
    let mut cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = apply_overrides(&mut cfg, seed, paths, grid, eps_ladder, drift, u0) {
        eprintln!("config error: {e}");
        return ExitCode::from(2);
    }
    let out_dir = out.unwrap_or_else(|| PathBuf::from("runs").join(kind.id()));
    let mut writer = match RunWriter::create(&out_dir) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("output error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = writer.write_text(
        "config.toml",
        &toml::to_string(&cfg).expect("config serializes"),
    ) {
        eprintln!("output error: {e}");
        return ExitCode::from(2);
    }

    let verdict = match run_experiment(kind, &cfg, &mut writer) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("run failed: {e}");
            return match e {
                LabError::InvalidConfig(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            };
        }
    };
    let manifest = RunManifest::new(
        kind.id(),
        &cfg,
        &config.display().to_string(),
        &out_dir.display().to_string(),
    );
    if let Err(e) = writer
        .write_json("verdict.json", &verdict)
        .and_then(|_| writer.write_json("manifest.json", &manifest))
    {
        eprintln!("output error: {e}");
        return ExitCode::from(1);
    }
    let published = match writer.finalize() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("output error: {e}");
            return ExitCode::from(1);
        }
    };

    for a in &verdict.assertions {
        println!(
            "{} {} [{}]",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.invariant
        );
        if !a.passed {
            println!("     {} measured={}", a.detail, a.measured);
        }
    }
    println!(
        "{}: {} ({} assertions) -> {}",
        kind.id(),
        if verdict.passed { "PASS" } else { "FAIL" },
        verdict.assertions.len(),
        published.display()
    );
    if verdict.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_list() -> ExitCode {
    println!("drifts:");
    for (id, description) in builtin_examples() {
        let field = drift_by_id(&id).expect("catalog id resolves");
        let div = if field.divergence.is_distributional() {
            "distributional"
        } else {
            match &field.divergence {
                transport_lab::field::Divergence::Analytic { unbounded: true, .. } => {
                    "analytic (unbounded, L1_loc)"
                }
                _ => "analytic",
            }
        };
        println!("  {id:<12} {description} | div: {div}");
    }
    println!("initial data:");
    for entry in u0_catalog() {
        println!("  {:<12} {}", entry.id, entry.description);
    }
    println!("mollifiers:");
    println!("  bump         compact bump exp(-1/(1-|x/eps|^2)), support radius eps");
    println!("  gauss        Gaussian sigma = eps/3 truncated at |x| <= eps");
    println!("controls (h probes):");
    println!("  zero         h = 0");
    println!("  one          h = 1");
    println!("  switch       h = +1 on [0, T/2), -1 afterwards");
    println!("  const:<v>    h = v");
    ExitCode::SUCCESS
}

fn cmd_validate(config: PathBuf) -> ExitCode {
    match ExperimentConfig::load(&config) {
        Ok(cfg) => {
            println!("ok {}", cfg.hash());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run {
            experiment,
            config,
            seed,
            paths,
            grid,
            eps_ladder,
            drift,
            u0,
            out,
        } => cmd_run(
            experiment, config, seed, paths, grid, eps_ladder, drift, u0, out,
        ),
        Cmd::List => cmd_list(),
        Cmd::Validate { config } => cmd_validate(config),
    }
}
