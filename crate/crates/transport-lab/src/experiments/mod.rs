//! The experiment orchestrator: each experiment runs end to end from one
//! validated config, writes its data tables and a machine-checkable verdict,
//! and is bit-reproducible from (config, seed).
//!
//! Every verdict assertion names the module invariant it checks. Each
//! experiment also carries one deliberately broken variant (negative
//! control) whose failure is asserted, guarding the tolerances against
//! vacuity.

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::field::{drift_by_id, mollify_field, mollify_initial, u0_by_id, MollifierFamily,
    MollifierKind, ScalarField, VectorField};
use crate::output::RunWriter;

mod commutator_suite;
mod contrast;
mod existence;
mod meanreg;
mod noise_suite;
mod selection;
mod uniqueness;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Existence,
    MeanRegularity,
    UniquenessEnergy,
    Selection,
    Contrast,
    NoiseSuite,
    CommutatorSuite,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Existence,
        ExperimentKind::MeanRegularity,
        ExperimentKind::UniquenessEnergy,
        ExperimentKind::Selection,
        ExperimentKind::Contrast,
        ExperimentKind::NoiseSuite,
        ExperimentKind::CommutatorSuite,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            ExperimentKind::Existence => "existence",
            ExperimentKind::MeanRegularity => "meanreg",
            ExperimentKind::UniquenessEnergy => "uniqueness",
            ExperimentKind::Selection => "selection",
            ExperimentKind::Contrast => "contrast",
            ExperimentKind::NoiseSuite => "noise-suite",
            ExperimentKind::CommutatorSuite => "commutator-suite",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.id() == s)
    }
}

/// One checked statement inside a verdict, tied to a named module invariant.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    /// The module invariant this assertion instantiates, e.g.
    /// `parabolic.max-principle`.
    pub invariant: String,
    pub passed: bool,
    pub measured: serde_json::Value,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub experiment: String,
    pub config_hash: String,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
    pub artifacts: Vec<String>,
}

/// Accumulates assertions for one experiment run.
pub struct VerdictBuilder {
    experiment: String,
    config_hash: String,
    assertions: Vec<Assertion>,
}

impl VerdictBuilder {
    pub fn new(kind: ExperimentKind, cfg: &ExperimentConfig) -> Self {
        VerdictBuilder {
            experiment: kind.id().to_string(),
            config_hash: cfg.hash(),
            assertions: Vec::new(),
        }
    }

    pub fn check(
        &mut self,
        name: &str,
        invariant: &str,
        passed: bool,
        measured: serde_json::Value,
        detail: &str,
    ) {
        self.assertions.push(Assertion {
            name: name.to_string(),
            invariant: invariant.to_string(),
            passed,
            measured,
            detail: detail.to_string(),
        });
    }

    pub fn finish(self, artifacts: Vec<String>) -> Verdict {
        let passed = self.assertions.iter().all(|a| a.passed);
        Verdict {
            experiment: self.experiment,
            config_hash: self.config_hash,
            passed,
            assertions: self.assertions,
            artifacts,
        }
    }
}

/// Runs one experiment, writing tables into `writer`; the caller publishes
/// the directory and the verdict.
pub fn run_experiment(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    writer: &mut RunWriter,
) -> Result<Verdict> {
    cfg.validate()?;
    match kind {
        ExperimentKind::Existence => existence::run(cfg, writer),
        ExperimentKind::MeanRegularity => meanreg::run(cfg, writer),
        ExperimentKind::UniquenessEnergy => uniqueness::run(cfg, writer),
        ExperimentKind::Selection => selection::run(cfg, writer),
        ExperimentKind::Contrast => contrast::run(cfg, writer),
        ExperimentKind::NoiseSuite => noise_suite::run(cfg, writer),
        ExperimentKind::CommutatorSuite => commutator_suite::run(cfg, writer),
    }
}

// ---------------------------------------------------------------------------
// Shared builders
// ---------------------------------------------------------------------------

pub(crate) fn mollifier_primary(cfg: &ExperimentConfig, eps: f64) -> Result<MollifierFamily> {
    MollifierFamily::new(
        MollifierKind::parse(&cfg.field.mollifier)
            .ok_or_else(|| LabError::InvalidConfig("bad mollifier".into()))?,
        eps,
    )
}

pub(crate) fn mollifier_secondary(cfg: &ExperimentConfig, eps: f64) -> Result<MollifierFamily> {
    MollifierFamily::new(
        MollifierKind::parse(&cfg.field.mollifier_b)
            .ok_or_else(|| LabError::InvalidConfig("bad mollifier_b".into()))?,
        eps,
    )
}

/// Drift for the pipelines: raw when it is already zero or Lipschitz
/// (cached for speed), mollified otherwise.
pub(crate) fn resolve_drift(
    id: &str,
    rho: &MollifierFamily,
    mollify: bool,
) -> Result<VectorField> {
    let raw = drift_by_id(id)?;
    if raw.sup_bound == 0.0 {
        return Ok(raw);
    }
    if mollify {
        mollify_field(&raw, rho)
    } else if raw.dim == 1 {
        // Sample onto a kink-aligned cache so the flow hot loop interpolates.
        Ok(raw.cached_1d(1920))
    } else {
        Ok(raw)
    }
}

pub(crate) fn resolve_u0(id: &str, rho: &MollifierFamily) -> Result<ScalarField> {
    mollify_initial(&u0_by_id(id)?, rho)
}

pub(crate) fn json(v: impl Serialize) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}
