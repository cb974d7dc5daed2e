//! Selection-principle experiment: two mollifier families under common
//! noise, an eps ladder of exponential-weighted mean fields from both Monte
//! Carlo and the parabolic solver, the two-family difference bound at every
//! rung, and terminal-difference halving down the ladder. Independent noise
//! streams form the negative control.

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::expectation::{MeanField, VEstimator, WeightMode};
use crate::field::VectorField;
use crate::noise::SeedStream;
use crate::output::{fmt_f64, RunWriter};
use crate::parabolic::{difference_energy, solve_parabolic, ParabolicProblem};

use super::{json, mollifier_primary, mollifier_secondary, resolve_drift, resolve_u0,
    ExperimentKind, Verdict, VerdictBuilder};

/// Terminal-row L^2 distance plus the Monte Carlo noise inflation of that
/// distance (zero for solver fields).
fn terminal_diff(v: &MeanField, w: &MeanField) -> (f64, f64) {
    let grid = v.space_grid;
    let s = v.times.len() - 1;
    let d_sq: Vec<f64> = v
        .row(s)
        .iter()
        .zip(w.row(s))
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    let noise_sq: Vec<f64> = v
        .stderr_row(s)
        .iter()
        .zip(w.stderr_row(s))
        .map(|(a, b)| a * a + b * b)
        .collect();
    (
        grid.integrate(&d_sq).sqrt(),
        grid.integrate(&noise_sq).sqrt(),
    )
}

struct RungFields {
    mc_a: MeanField,
    mc_b: MeanField,
    solver_a: MeanField,
    solver_b: MeanField,
    b_a: VectorField,
    b_b: VectorField,
}

fn run_rung(
    cfg: &ExperimentConfig,
    drift_id: &str,
    eps: f64,
    paths: usize,
    seeds: SeedStream,
    stream_a: &'static str,
    stream_b: &'static str,
) -> Result<RungFields> {
    let rho_a = mollifier_primary(cfg, eps)?;
    let rho_b = mollifier_secondary(cfg, eps)?;
    let b_a = resolve_drift(drift_id, &rho_a, true)?;
    let b_b = resolve_drift(drift_id, &rho_b, true)?;
    let u0_a = resolve_u0(&cfg.field.u0, &rho_a)?;
    let u0_b = resolve_u0(&cfg.field.u0, &rho_b)?;
    let space = cfg.space_grid();
    let tg = cfg.time_grid();
    let snapshots = cfg.snapshot_indices();
    let h = cfg.control(tg);

    let estimate = |b: &VectorField, u0: &crate::field::ScalarField, stream: &'static str| {
        VEstimator {
            b_eps: b,
            u0_eps: u0,
            h: &h,
            lattice: space,
            eval_grid: space,
            snapshots: snapshots.clone(),
            paths,
            seeds,
            stream,
            weight: WeightMode::Running,
        }
        .run()
    };
    let mc_a = estimate(&b_a, &u0_a, stream_a)?;
    let mc_b = estimate(&b_b, &u0_b, stream_b)?;

    let solver = |b: &VectorField, u0: &crate::field::ScalarField| -> Result<MeanField> {
        let time = ParabolicProblem::stable_time_grid(
            &space,
            cfg.grid.horizon,
            b.sup_bound + 1.0,
            cfg.grid.snapshots,
        );
        let h_solver = cfg.control(time);
        let p = ParabolicProblem {
            b_eps: b,
            h: &h_solver,
            v0: u0,
            space,
            time,
        };
        Ok(solve_parabolic(&p, cfg.grid.snapshots)?.field)
    };
    let solver_a = solver(&b_a, &u0_a)?;
    let solver_b = solver(&b_b, &u0_b)?;
    Ok(RungFields {
        mc_a,
        mc_b,
        solver_a,
        solver_b,
        b_a,
        b_b,
    })
}

pub fn run(cfg: &ExperimentConfig, w: &mut RunWriter) -> Result<Verdict> {
    let mut v = VerdictBuilder::new(ExperimentKind::Selection, cfg);
    let seeds = SeedStream::new(cfg.noise.seed);
    let ladder = if cfg.field.eps_ladder.is_empty() {
        vec![cfg.field.eps]
    } else {
        cfg.field.eps_ladder.clone()
    };
    let factor = cfg.tolerances.ladder_factor;
    let gate = cfg.tolerances.sigma_gate;

    let mut ladder_rows = Vec::new();
    let mut solver_diffs = Vec::new();
    let mut mc_diffs = Vec::new();
    let mut mc_noises = Vec::new();
    for (ri, &eps) in ladder.iter().enumerate() {
        let rung = run_rung(cfg, &cfg.field.drift, eps, cfg.noise.paths, seeds, "sel", "sel")?;
        let (mc_diff, mc_noise) = terminal_diff(&rung.mc_a, &rung.mc_b);
        let (solver_diff, _) = terminal_diff(&rung.solver_a, &rung.solver_b);
        ladder_rows.push(format!(
            "{},{},{},{},{}",
            fmt_f64(eps),
            fmt_f64(solver_diff),
            fmt_f64(mc_diff),
            fmt_f64(mc_noise),
            rung.mc_a.paths,
        ));
        solver_diffs.push(solver_diff);
        mc_diffs.push(mc_diff);
        mc_noises.push(mc_noise);

        // Two-family difference bound at this rung, on the solver fields
        // where both sides are deterministic. C is the implementation
        // growth constant ||b||^2 + 1.
        let c = rung.b_a.sup_bound * rung.b_a.sup_bound + 1.0;
        let rep = difference_energy(&rung.solver_a, &rung.solver_b, &rung.b_a, &rung.b_b, c)?;
        w.write_csv(
            &format!("gronwall2_rung{ri}.csv"),
            "t,lhs,rhs",
            rep.times
                .iter()
                .zip(rep.lhs.iter().zip(&rep.rhs))
                .map(|(t, (l, r))| format!("{},{},{}", fmt_f64(*t), fmt_f64(*l), fmt_f64(*r))),
        )?;
        v.check(
            &format!("difference-bound[eps={eps}]"),
            "parabolic.energy-identity",
            rep.holds,
            json(serde_json::json!({"min_slack": rep.min_slack, "drift_l2": rep.drift_l2_distance})),
            "two-family difference bound holds at every snapshot",
        );
    }
    w.write_csv(
        "ladder.csv",
        "eps,solver_diff_l2,mc_diff_l2,mc_noise_l2,paths",
        ladder_rows,
    )?;

    if ladder.len() >= 2 {
        let solver_halves = *solver_diffs.last().unwrap() <= factor * solver_diffs[0];
        v.check(
            "terminal-halving-solver",
            "commutator.ladder-halving",
            solver_halves,
            json(&solver_diffs),
            "solver two-family terminal L2 difference halves down the ladder",
        );
        let allowance = gate * mc_noises.last().unwrap();
        let mc_halves = *mc_diffs.last().unwrap() <= factor * mc_diffs[0] + allowance;
        v.check(
            "terminal-halving-mc",
            "expectation.common-random-numbers",
            mc_halves,
            json(serde_json::json!({"diffs": mc_diffs, "noise_allowance": allowance})),
            "MC two-family terminal difference halves within the common-noise allowance",
        );
    }

    // Smooth-drift control: at one rung the two families agree within MC
    // noise (mollification is near-exact on the piecewise-linear drift).
    {
        let eps = ladder[0].min(0.1);
        let rung = run_rung(cfg, "ou", eps, cfg.noise.paths.min(4000), seeds, "sel-smooth", "sel-smooth")?;
        let mut worst = 0.0_f64;
        for i in 0..rung.mc_a.values.len() {
            let allowed = gate * (rung.mc_a.stderr[i] + rung.mc_b.stderr[i]) + 5e-3;
            worst = worst.max((rung.mc_a.values[i] - rung.mc_b.values[i]).abs() - allowed);
        }
        v.check(
            "smooth-drift-family-agreement",
            "expectation.common-random-numbers",
            worst <= 0.0,
            json(worst),
            "for a Lipschitz drift the two families agree to within MC noise",
        );
    }

    // Identical families under one stream are bitwise equal.
    {
        let rho = mollifier_primary(cfg, ladder[0])?;
        let b = resolve_drift(&cfg.field.drift, &rho, true)?;
        let u0 = resolve_u0(&cfg.field.u0, &rho)?;
        let space = cfg.space_grid();
        let tg = cfg.time_grid();
        let h = cfg.control(tg);
        let mk = || {
            VEstimator {
                b_eps: &b,
                u0_eps: &u0,
                h: &h,
                lattice: space,
                eval_grid: space,
                snapshots: cfg.snapshot_indices(),
                paths: cfg.noise.paths.min(1000),
                seeds,
                stream: "sel-same",
                weight: WeightMode::Running,
            }
            .run()
        };
        let a = mk()?;
        let b2 = mk()?;
        v.check(
            "identical-family-zero-difference",
            "expectation.common-random-numbers",
            a.values == b2.values,
            json(true),
            "one family against itself on one stream differs by exactly zero",
        );
    }

    // Negative control: independent noise streams must destroy the halving.
    if ladder.len() >= 2 {
        let m = cfg.noise.paths.min(2000);
        let first = run_rung(cfg, &cfg.field.drift, ladder[0], m, seeds, "sel-indep-a", "sel-indep-b")?;
        let last = run_rung(
            cfg,
            &cfg.field.drift,
            *ladder.last().unwrap(),
            m,
            seeds,
            "sel-indep-a",
            "sel-indep-b",
        )?;
        let (d_first, _) = terminal_diff(&first.mc_a, &first.mc_b);
        let (d_last, _) = terminal_diff(&last.mc_a, &last.mc_b);
        v.check(
            "negative-control-independent-noise",
            "expectation.common-random-numbers",
            d_last > factor * d_first,
            json(serde_json::json!({"first": d_first, "last": d_last})),
            "without common random numbers the difference is noise-dominated and must not halve",
        );
    }

    Ok(v.finish(w.files().to_vec()))
}
