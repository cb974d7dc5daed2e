//! Stochastic-exponential suite: mean-one martingale property at every grid
//! time for the probe controls, strong order 1/2 of the exponential SDE
//! residual under grid refinement, and the two-sided exponential-pairing
//! identity, plus a drift-correction negative control.

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::grid::dot;
use crate::noise::{exponential_of, sample_path, verify_bf_identity, verify_exponential_sde,
    ControlFunction, SeedStream};
use crate::output::{fmt_f64, RunWriter};

use super::{json, ExperimentKind, Verdict, VerdictBuilder};

struct MartingaleStats {
    mean: Vec<f64>,
    stderr: Vec<f64>,
    worst_dev_sigmas: f64,
    all_positive: bool,
}

/// Per-time mean and standard error of F_t over the paths; `broken` skips
/// the Ito correction term, which destroys the martingale property.
fn martingale_scan(
    h: &ControlFunction,
    paths: usize,
    seeds: &SeedStream,
    stream: &str,
    broken: bool,
) -> MartingaleStats {
    let steps = h.grid.steps;
    let dt = h.grid.dt();
    let mut sum = vec![0.0; steps + 1];
    let mut sum2 = vec![0.0; steps + 1];
    let mut all_positive = true;
    for i in 0..paths {
        let path = sample_path(seeds.derive(stream, i as u64), steps, h.grid.horizon, h.dim);
        let mut log_f = 0.0;
        sum[0] += 1.0;
        sum2[0] += 1.0;
        for k in 0..steps {
            let hk = h.values[k];
            log_f += dot(hk, path.increments[k]);
            if !broken {
                log_f -= 0.5 * dot(hk, hk) * dt;
            }
            let f = log_f.exp();
            if f <= 0.0 {
                all_positive = false;
            }
            sum[k + 1] += f;
            sum2[k + 1] += f * f;
        }
    }
    let m = paths as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let stderr: Vec<f64> = sum
        .iter()
        .zip(&sum2)
        .map(|(s, s2)| {
            let mu = s / m;
            ((s2 / m - mu * mu).max(0.0) / m).sqrt()
        })
        .collect();
    let worst = mean
        .iter()
        .zip(&stderr)
        .skip(1)
        .map(|(mu, se)| (mu - 1.0).abs() / se.max(1e-300))
        .fold(0.0_f64, f64::max);
    MartingaleStats {
        mean,
        stderr,
        worst_dev_sigmas: worst,
        all_positive,
    }
}

pub fn run(cfg: &ExperimentConfig, w: &mut RunWriter) -> Result<Verdict> {
    let mut v = VerdictBuilder::new(ExperimentKind::NoiseSuite, cfg);
    let seeds = SeedStream::new(cfg.noise.seed);
    let tg = cfg.time_grid();
    let paths = cfg.noise.paths;
    let gate = cfg.tolerances.sigma_gate;

    // Mean-one martingale at every grid time for each probe control.
    let mut rows = Vec::new();
    for probe in &cfg.noise.h_probes {
        let h = cfg.probe_control(probe, tg)?;
        let stats = martingale_scan(&h, paths, &seeds, "martingale", false);
        for (k, (mu, se)) in stats.mean.iter().zip(&stats.stderr).enumerate() {
            rows.push(format!(
                "{probe},{},{},{}",
                fmt_f64(tg.time(k)),
                fmt_f64(*mu),
                fmt_f64(*se)
            ));
        }
        v.check(
            &format!("martingale-mean-one[{probe}]"),
            "noise.mean-one",
            stats.worst_dev_sigmas <= gate,
            json(serde_json::json!({
                "worst_dev_sigmas": stats.worst_dev_sigmas,
                "paths": paths,
            })),
            "MC mean of F_t within gate standard errors of 1 at every grid time",
        );
        v.check(
            &format!("positivity[{probe}]"),
            "noise.positivity",
            stats.all_positive,
            json(stats.all_positive),
            "every exponential sample strictly positive",
        );
    }
    w.write_csv("martingale.csv", "h_probe,t,mean,stderr", rows)?;

    // Negative control: drop the Ito correction; the mean must leave the
    // gate band.
    let h_one = cfg.probe_control("one", tg)?;
    let broken = martingale_scan(&h_one, paths.min(20_000), &seeds, "martingale-broken", true);
    v.check(
        "negative-control-broken-correction",
        "noise.mean-one",
        broken.worst_dev_sigmas > gate,
        json(broken.worst_dev_sigmas),
        "omitting the -1/2 |h|^2 dt correction must fail the mean-one gate",
    );

    // SDE residual refinement: RMS at {K/4, K, 4K} halves per 4x step
    // refinement within factor 1.5 (strong order 1/2).
    let residual_paths = 1000;
    let mut rms = Vec::new();
    let levels = [tg.steps / 4, tg.steps, tg.steps * 4];
    for &steps in &levels {
        let lg = crate::grid::TimeGrid::new(tg.horizon, steps);
        let h = ControlFunction::constant(lg, cfg.grid.dim, [1.0, 0.0]);
        let mut acc = 0.0;
        for i in 0..residual_paths {
            let p = sample_path(seeds.derive("sde", i as u64), steps, tg.horizon, cfg.grid.dim);
            let r = verify_exponential_sde(&h, &p)?;
            acc += r * r;
        }
        rms.push((acc / residual_paths as f64).sqrt());
    }
    w.write_csv(
        "sde_residual.csv",
        "steps,rms",
        levels
            .iter()
            .zip(&rms)
            .map(|(s, r)| format!("{s},{}", fmt_f64(*r))),
    )?;
    let ratios: Vec<f64> = rms.windows(2).map(|p| p[0] / p[1]).collect();
    let order_ok = ratios.iter().all(|r| *r > 2.0 / 1.5 && *r < 2.0 * 1.5);
    v.check(
        "sde-residual-order-half",
        "noise.sde-consistency",
        order_ok,
        json(serde_json::json!({"rms": rms, "ratios": ratios})),
        "exponential SDE residual RMS halves per 4x refinement within factor 1.5",
    );

    // Exponential-pairing identity with Y = B, h = 1, shared paths.
    let report = verify_bf_identity(
        |p| p.values()[..p.steps()].to_vec(),
        &h_one,
        tg.steps,
        paths,
        &seeds,
    )?;
    w.write_csv(
        "bf_identity.csv",
        "side,value,stderr",
        vec![
            format!("lhs,{},{}", fmt_f64(report.lhs), fmt_f64(report.lhs_stderr)),
            format!("rhs,{},{}", fmt_f64(report.rhs), fmt_f64(report.rhs_stderr)),
        ],
    )?;
    v.check(
        "exponential-pairing-identity",
        "noise.mean-one",
        report.overlaps(cfg.tolerances.sigma_example),
        json(&report),
        "LHS and RHS confidence intervals overlap at the example sigma level",
    );

    // Reproducibility: a small scan repeated bitwise.
    let a = martingale_scan(&h_one, 200, &seeds, "repro", false);
    let b = martingale_scan(&h_one, 200, &seeds, "repro", false);
    v.check(
        "reproducibility",
        "noise.reproducible",
        a.mean == b.mean && a.stderr == b.stderr,
        json(true),
        "identical (seed, config) reproduces the estimate bitwise",
    );

    // Exponential of a fixed path with increments summing to zero: F_T =
    // exp(-T/2) exactly.
    let fixed = crate::noise::BrownianPath {
        dim: 1,
        grid: crate::grid::TimeGrid::new(tg.horizon, 2),
        increments: vec![[0.3, 0.0], [-0.3, 0.0]],
        seed: 0,
    };
    let h2 = ControlFunction::constant(fixed.grid, 1, [1.0, 0.0]);
    let f = exponential_of(&h2, &fixed)?;
    let expect = (-tg.horizon / 2.0).exp();
    v.check(
        "fixed-path-closed-form",
        "noise.positivity",
        (f.terminal() - expect).abs() < 1e-14,
        json(f.terminal()),
        "zero-sum increments with h = 1 give F_T = exp(-T/2) exactly",
    );

    Ok(v.finish(w.files().to_vec()))
}
