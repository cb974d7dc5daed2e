//! Uniqueness / energy experiment: zero data stays zero, the discrete
//! Gronwall constants sit below the exponential prediction for every catalog
//! run, the commutator of the drift with solver mean fields vanishes down
//! the eps ladder, and the squared-field identity balances at scheme order.
//! A source-injected energy trace is the negative control.

use crate::commutator::{compute_commutator, l1loc_norm};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::field::{drift_by_id, GridFn1, MollifierFamily, MollifierKind, ScalarField};
use crate::grid::{BoxDomain, SpaceGrid};
use crate::noise::ControlFunction;
use crate::output::{fmt_f64, RunWriter};
use crate::parabolic::{energy_report, solve_parabolic, ParabolicProblem, SolverOutput};

use super::{json, mollifier_primary, resolve_drift, resolve_u0, ExperimentKind, Verdict,
    VerdictBuilder};

fn row_as_field(out: &SolverOutput, s: usize) -> ScalarField {
    let grid = out.field.space_grid;
    let hw = grid.domain.half_width;
    ScalarField::from_grid1(
        grid.domain,
        GridFn1::from_values(-hw, hw, out.field.row(s).to_vec()),
        out.field.sup_norm(),
    )
}

/// Smooth evaluation of `rho_eps * row` (no cache, so derivatives exist at
/// every scale above the row resolution).
struct MollifiedRow {
    offs: Vec<f64>,
    ws: Vec<f64>,
    row: GridFn1,
}

impl MollifiedRow {
    fn new(row: &[f64], hw: f64, rho: &MollifierFamily) -> Self {
        let (offs, ws) = rho.conv_stencil_1d();
        MollifiedRow {
            offs,
            ws,
            row: GridFn1::from_values(-hw, hw, row.to_vec()),
        }
    }

    fn value(&self, x: f64) -> f64 {
        self.offs
            .iter()
            .zip(&self.ws)
            .map(|(y, w)| w * self.row.eval(x - y))
            .sum()
    }

    fn grad(&self, x: f64, h: f64) -> f64 {
        (self.value(x + h) - self.value(x - h)) / (2.0 * h)
    }

    fn lap(&self, x: f64, h: f64) -> f64 {
        (self.value(x + h) - 2.0 * self.value(x) + self.value(x - h)) / (h * h)
    }
}

/// Max over probe points and snapshot times of the squared-field identity
/// residual at one solver resolution.
fn identity_residual(
    cfg: &ExperimentConfig,
    cells: usize,
    snapshots: usize,
    eps_c: f64,
) -> Result<f64> {
    let rho = MollifierFamily::new(MollifierKind::CompactBump, eps_c)?;
    let raw = drift_by_id("ou")?;
    let b = resolve_drift("ou", &rho, false)?;
    let moll_rho = mollifier_primary(cfg, cfg.field.eps)?;
    let v0 = resolve_u0(&cfg.field.u0, &moll_rho)?;
    let space = SpaceGrid::new(BoxDomain::new(1, cfg.grid.half_width), cells);
    let time = ParabolicProblem::stable_time_grid(&space, cfg.grid.horizon, b.sup_bound + 1.0, snapshots);
    let h = ControlFunction::constant(time, 1, [1.0, 0.0]);
    let p = ParabolicProblem {
        b_eps: &b,
        h: &h,
        v0: &v0,
        space,
        time,
    };
    let out = solve_parabolic(&p, snapshots)?;
    let hw = cfg.grid.half_width;
    let fd = eps_c / 16.0;
    let probe_xs: Vec<f64> = (0..9).map(|i| -1.0 + 0.25 * i as f64).collect();
    let eval_grid = SpaceGrid::new(BoxDomain::new(1, hw), 1024);

    // Per-snapshot mollified rows and commutators R_eps(b_raw, V(s,.)).
    let s_count = out.field.times.len();
    let mut mrows = Vec::with_capacity(s_count);
    let mut commutators = Vec::with_capacity(s_count);
    for s in 0..s_count {
        mrows.push(MollifiedRow::new(out.field.row(s), hw, &rho));
        let g = row_as_field(&out, s);
        commutators.push(compute_commutator(&raw, &g, &rho, eval_grid)?);
    }

    let mut worst = 0.0_f64;
    for &x in &probe_xs {
        let v0x = mrows[0].value(x);
        let mut time_int = 0.0; // int (b+h) d/dx V_eps^2 - V_eps lap V_eps - 2 V_eps R ds
        let mut prev = integrand(&mrows[0], &commutators[0], &raw, x, fd);
        for s in 1..s_count {
            let cur = integrand(&mrows[s], &commutators[s], &raw, x, fd);
            let dt = out.field.times[s] - out.field.times[s - 1];
            time_int += 0.5 * (prev + cur) * dt;
            prev = cur;
            let lhs = mrows[s].value(x).powi(2) - v0x * v0x + time_int;
            worst = worst.max(lhs.abs());
        }
    }
    Ok(worst)
}

fn integrand(
    m: &MollifiedRow,
    r_eps: &ScalarField,
    b_raw: &crate::field::VectorField,
    x: f64,
    fd: f64,
) -> f64 {
    let v = m.value(x);
    let dv2 = 2.0 * v * m.grad(x, fd);
    let a = b_raw.evaluate(0.0, [x, 0.0])[0] + 1.0; // h = 1 on this run
    a * dv2 - v * m.lap(x, fd) - 2.0 * v * r_eps.evaluate([x, 0.0])
}

pub fn run(cfg: &ExperimentConfig, w: &mut RunWriter) -> Result<Verdict> {
    let mut v = VerdictBuilder::new(ExperimentKind::UniquenessEnergy, cfg);
    let rho = mollifier_primary(cfg, cfg.field.eps)?;
    let space = cfg.space_grid();
    let horizon = cfg.grid.horizon;

    // --- Zero initial data stays identically zero.
    {
        let b = resolve_drift(&cfg.field.drift, &rho, true)?;
        let v0 = ScalarField::analytic(1, space.domain, 0.0, |_| 0.0);
        let time =
            ParabolicProblem::stable_time_grid(&space, horizon, b.sup_bound + 1.0, cfg.grid.snapshots);
        let h = ControlFunction::constant(time, 1, [1.0, 0.0]);
        let p = ParabolicProblem {
            b_eps: &b,
            h: &h,
            v0: &v0,
            space,
            time,
        };
        let out = solve_parabolic(&p, cfg.grid.snapshots)?;
        let sup = out.field.sup_norm();
        v.check(
            "zero-data-stays-zero",
            "parabolic.max-principle",
            sup == 0.0,
            json(sup),
            "explicit scheme maps zero to zero at machine precision",
        );
    }

    // --- Energy reports across the catalog runs.
    let mut energy_rows = Vec::new();
    let mut gronwall_rows = Vec::new();
    for (drift_id, mollify) in [("zero", false), ("ou", false), (cfg.field.drift.as_str(), true)] {
        let b = resolve_drift(drift_id, &rho, mollify)?;
        let v0 = resolve_u0(&cfg.field.u0, &rho)?;
        let time =
            ParabolicProblem::stable_time_grid(&space, horizon, b.sup_bound, cfg.grid.snapshots);
        let h = ControlFunction::zero(time, 1);
        let p = ParabolicProblem {
            b_eps: &b,
            h: &h,
            v0: &v0,
            space,
            time,
        };
        let out = solve_parabolic(&p, cfg.grid.snapshots)?;
        let report = energy_report(&out, b.sup_bound, horizon);
        let tag = drift_id.replace(':', "-");
        for (i, &t) in out.energy.times.iter().enumerate().step_by(16) {
            energy_rows.push(format!(
                "{tag},{},{},{}",
                fmt_f64(t),
                fmt_f64(out.energy.l2_sq[i]),
                fmt_f64(out.energy.cum_grad[i])
            ));
        }
        gronwall_rows.push(format!(
            "{tag},{},{},{},{},{}",
            fmt_f64(report.c_un_dos),
            fmt_f64(report.c_eqen),
            fmt_f64(report.c_bound),
            fmt_f64(report.predicted),
            report.max_principle_ok
        ));
        v.check(
            &format!("gronwall-bound[{drift_id}]"),
            "parabolic.energy-identity",
            report.satisfied && report.max_principle_ok,
            json(&report),
            "measured growth constant below the exponential prediction, max principle clean",
        );
    }
    w.write_csv("energy.csv", "drift,t,l2_sq,cum_grad", energy_rows)?;
    w.write_csv(
        "gronwall.csv",
        "drift,c_un_dos,c_eqen,c_bound,predicted,max_principle",
        gronwall_rows,
    )?;

    // --- Commutator ladder on (raw drift, solver V(t, .)) at representative
    // times T/4, T/2, T; the a.e.-in-time statement tested at fixed slices.
    let ladder: Vec<f64> = if cfg.field.eps_ladder.is_empty() {
        vec![0.2, 0.1, 0.05]
    } else {
        cfg.field.eps_ladder.clone()
    };
    let mut comm_rows = Vec::new();
    for drift_id in ["ou", cfg.field.drift.as_str()] {
        let raw = drift_by_id(drift_id)?;
        let b = resolve_drift(drift_id, &rho, drift_id != "ou")?;
        let v0 = resolve_u0(&cfg.field.u0, &rho)?;
        // 512 cells keep the solver rows resolved for the smallest rung.
        let fine = SpaceGrid::new(space.domain, 512.max(space.n));
        let time = ParabolicProblem::stable_time_grid(&fine, horizon, b.sup_bound, 4);
        let h = ControlFunction::zero(time, 1);
        let p = ParabolicProblem {
            b_eps: &b,
            h: &h,
            v0: &v0,
            space: fine,
            time,
        };
        let out = solve_parabolic(&p, 4)?;
        let eval_grid = SpaceGrid::new(space.domain, 1536);
        let kind = MollifierKind::parse(&cfg.field.mollifier).unwrap();
        let mut worst_ratio = 0.0_f64;
        for s in [1usize, 2, 4] {
            let g = row_as_field(&out, s);
            let mut norms = Vec::new();
            for &eps in &ladder {
                let rho_l = MollifierFamily::new(kind, eps)?;
                let r = compute_commutator(&raw, &g, &rho_l, eval_grid)?;
                let norm = l1loc_norm(&r, (-1.0, 1.0));
                norms.push(norm);
                comm_rows.push(format!(
                    "{},{},{},{}",
                    drift_id.replace(':', "-"),
                    fmt_f64(out.field.times[s]),
                    fmt_f64(eps),
                    fmt_f64(norm)
                ));
            }
            if norms[0] > 0.0 {
                worst_ratio = worst_ratio.max(norms.last().unwrap() / norms[0]);
            }
        }
        v.check(
            &format!("commutator-on-mean-field[{drift_id}]"),
            "commutator.ladder-halving",
            worst_ratio <= cfg.tolerances.ladder_factor,
            json(worst_ratio),
            "commutator of the raw drift with solver mean fields halves down the ladder",
        );
    }
    w.write_csv("commutator_v.csv", "drift,t,eps,l1_norm", comm_rows)?;

    // --- Squared-field identity balances at scheme order: the residual
    // shrinks when both the grid and the snapshot count refine.
    let res_coarse = identity_residual(cfg, 256, 16, 0.1)?;
    let res_fine = identity_residual(cfg, 512, 32, 0.1)?;
    w.write_csv(
        "squared_identity.csv",
        "cells,residual",
        vec![
            format!("256,{}", fmt_f64(res_coarse)),
            format!("512,{}", fmt_f64(res_fine)),
        ],
    )?;
    v.check(
        "squared-field-identity",
        "parabolic.self-convergence",
        res_fine <= res_coarse / 1.3,
        json(serde_json::json!({"coarse": res_coarse, "fine": res_fine})),
        "pointwise squared-field identity residual decays under refinement",
    );

    // --- Negative control: add a source to the field (W = V + t S) and
    // require the energy gate to fail on the doctored trace.
    {
        let b = resolve_drift("ou", &rho, false)?;
        let v0 = resolve_u0(&cfg.field.u0, &rho)?;
        let time =
            ParabolicProblem::stable_time_grid(&space, horizon, b.sup_bound, cfg.grid.snapshots);
        let h = ControlFunction::zero(time, 1);
        let p = ParabolicProblem {
            b_eps: &b,
            h: &h,
            v0: &v0,
            space,
            time,
        };
        let mut out = solve_parabolic(&p, cfg.grid.snapshots)?;
        // Source S with ||S||_L2 chosen so the injected growth dwarfs the
        // admissible exponential envelope.
        let source_l2_sq = 40.0 * out.energy.l2_sq[0].max(1e-6);
        for (i, t) in out.energy.times.clone().iter().enumerate() {
            out.energy.l2_sq[i] += t * t * source_l2_sq;
        }
        let doctored = energy_report(&out, b.sup_bound, horizon);
        v.check(
            "negative-control-injected-source",
            "parabolic.energy-identity",
            !doctored.satisfied,
            json(doctored.c_un_dos),
            "an injected source term must violate the energy gate",
        );
    }

    Ok(v.finish(w.files().to_vec()))
}
