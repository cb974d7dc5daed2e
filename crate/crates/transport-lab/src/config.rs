//! Experiment configuration: a flat TOML file with one section per module,
//! schema validation with diagnostics, and a resolved-config hash covering
//! every field that affects numerics.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::field::{drift_by_id, u0_by_id, MollifierKind, SUPPORT_HALF_WIDTH};
use crate::grid::{BoxDomain, SpaceGrid, TimeGrid};
use crate::noise::ControlFunction;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Box half width L; catalog fields are supported in [-L/2, L/2].
    pub half_width: f64,
    /// Spatial cells per axis; nodes = cells + 1.
    pub cells: usize,
    /// Euler / noise time steps over the horizon.
    pub steps: usize,
    pub horizon: f64,
    /// Recorded time slices (must divide steps).
    pub snapshots: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub drift: String,
    pub u0: String,
    /// Primary mollifier family: "bump" or "gauss".
    pub mollifier: String,
    /// Second family for the selection and contrast experiments.
    #[serde(default = "default_mollifier_b")]
    pub mollifier_b: String,
    pub eps: f64,
    #[serde(default)]
    pub eps_ladder: Vec<f64>,
}

fn default_mollifier_b() -> String {
    "gauss".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub paths: usize,
    pub seed: u64,
    /// Control h as switch points `[t_start, value]`; empty means h = 0.
    #[serde(default)]
    pub h: Vec<[f64; 2]>,
    /// Probe controls by id: "zero", "one", "switch", or "const:<v>".
    #[serde(default = "default_h_probes")]
    pub h_probes: Vec<String>,
}

fn default_h_probes() -> Vec<String> {
    vec!["zero".into(), "one".into(), "switch".into()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "default_sigma_example")]
    pub sigma_example: f64,
    #[serde(default = "default_sigma_gate")]
    pub sigma_gate: f64,
    /// Down the eps ladder the last norm must not exceed this times the
    /// first.
    #[serde(default = "default_ladder_factor")]
    pub ladder_factor: f64,
    /// Safety factor on the calibrated scheme budget.
    #[serde(default = "default_scheme_safety")]
    pub scheme_safety: f64,
}

fn default_sigma_example() -> f64 {
    crate::tolerances::SIGMA_EXAMPLE
}
fn default_sigma_gate() -> f64 {
    crate::tolerances::SIGMA_GATE
}
fn default_ladder_factor() -> f64 {
    crate::tolerances::LADDER_HALVING
}
fn default_scheme_safety() -> f64 {
    crate::tolerances::SCHEME_BUDGET_SAFETY
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            sigma_example: default_sigma_example(),
            sigma_gate: default_sigma_gate(),
            ladder_factor: default_ladder_factor(),
            scheme_safety: default_scheme_safety(),
        }
    }
}

/// The resolved experiment configuration. The hash of its canonical TOML
/// serialization identifies a run; identical hash means identical numerics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub field: FieldConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

impl ExperimentConfig {
    pub fn from_str_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| LabError::InvalidConfig(format!("TOML schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.dim != 1 && g.dim != 2 {
            return Err(LabError::InvalidConfig(format!(
                "grid.dim must be 1 or 2, got {}",
                g.dim
            )));
        }
        if g.half_width < 2.0 * SUPPORT_HALF_WIDTH {
            return Err(LabError::InvalidConfig(format!(
                "grid.half_width must be at least {} so catalog fields sit in [-L/2, L/2]",
                2.0 * SUPPORT_HALF_WIDTH
            )));
        }
        if g.cells < 8 || g.steps == 0 || g.snapshots == 0 {
            return Err(LabError::InvalidConfig(
                "grid.cells >= 8, grid.steps >= 1, grid.snapshots >= 1 required".into(),
            ));
        }
        if g.steps % g.snapshots != 0 {
            return Err(LabError::InvalidConfig(format!(
                "grid.snapshots ({}) must divide grid.steps ({})",
                g.snapshots, g.steps
            )));
        }
        if !(g.horizon > 0.0) {
            return Err(LabError::InvalidConfig("grid.horizon must be positive".into()));
        }

        let dx = 2.0 * g.half_width / g.cells as f64;
        let check_eps = |eps: f64| -> Result<()> {
            if !(eps > 0.0) {
                return Err(LabError::InvalidConfig(format!("eps must be positive, got {eps}")));
            }
            if eps < 4.0 * dx {
                return Err(LabError::InvalidConfig(format!(
                    "eps = {eps} under-resolved: need eps >= 4 dx = {}",
                    4.0 * dx
                )));
            }
            Ok(())
        };
        check_eps(self.field.eps)?;
        for &e in &self.field.eps_ladder {
            check_eps(e)?;
        }
        if self
            .field
            .eps_ladder
            .windows(2)
            .any(|w| w[1] >= w[0])
        {
            return Err(LabError::InvalidConfig(
                "field.eps_ladder must be strictly decreasing".into(),
            ));
        }

        let drift = drift_by_id(&self.field.drift)?;
        let u0 = u0_by_id(&self.field.u0)?;
        if drift.dim != g.dim || u0.dim != g.dim {
            return Err(LabError::InvalidConfig(format!(
                "drift {:?} (d={}) and u0 {:?} (d={}) must match grid.dim = {}",
                self.field.drift, drift.dim, self.field.u0, u0.dim, g.dim
            )));
        }
        for kind in [&self.field.mollifier, &self.field.mollifier_b] {
            if MollifierKind::parse(kind).is_none() {
                return Err(LabError::InvalidConfig(format!(
                    "unknown mollifier kind {kind:?} (expected \"bump\" or \"gauss\")"
                )));
            }
        }

        if self.noise.paths == 0 {
            return Err(LabError::InvalidConfig("noise.paths must be positive".into()));
        }
        for probe in &self.noise.h_probes {
            parse_h_probe(probe)?;
        }
        for sw in &self.noise.h {
            if sw[0] < 0.0 || sw[0] > g.horizon {
                return Err(LabError::InvalidConfig(format!(
                    "h switch time {} outside [0, horizon]",
                    sw[0]
                )));
            }
        }
        let t = &self.tolerances;
        if t.sigma_example <= 0.0
            || t.sigma_gate <= 0.0
            || !(0.0 < t.ladder_factor && t.ladder_factor < 1.0)
            || t.scheme_safety < 1.0
        {
            return Err(LabError::InvalidConfig(
                "tolerances must be positive (ladder_factor in (0,1), scheme_safety >= 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn space_grid(&self) -> SpaceGrid {
        SpaceGrid::new(
            BoxDomain::new(self.grid.dim, self.grid.half_width),
            self.grid.cells,
        )
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.grid.horizon, self.grid.steps)
    }

    /// Snapshot indices 0, stride, ..., steps.
    pub fn snapshot_indices(&self) -> Vec<usize> {
        let stride = self.grid.steps / self.grid.snapshots;
        (0..=self.grid.snapshots).map(|i| i * stride).collect()
    }

    pub fn control(&self, time: TimeGrid) -> ControlFunction {
        if self.noise.h.is_empty() {
            ControlFunction::zero(time, self.grid.dim)
        } else {
            let switches: Vec<(f64, [f64; 2])> = self
                .noise
                .h
                .iter()
                .map(|sw| (sw[0], [sw[1], 0.0]))
                .collect();
            ControlFunction::from_switches(time, self.grid.dim, &switches)
        }
    }

    /// Probe control by id on the given time grid.
    pub fn probe_control(&self, id: &str, time: TimeGrid) -> Result<ControlFunction> {
        let dim = self.grid.dim;
        Ok(match parse_h_probe(id)? {
            HProbe::Zero => ControlFunction::zero(time, dim),
            HProbe::Const(v) => ControlFunction::constant(time, dim, [v, 0.0]),
            HProbe::Switch => ControlFunction::from_switches(
                time,
                dim,
                &[(0.0, [1.0, 0.0]), (time.horizon / 2.0, [-1.0, 0.0])],
            ),
        })
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

enum HProbe {
    Zero,
    Const(f64),
    Switch,
}

fn parse_h_probe(id: &str) -> Result<HProbe> {
    match id {
        "zero" => Ok(HProbe::Zero),
        "one" => Ok(HProbe::Const(1.0)),
        "switch" => Ok(HProbe::Switch),
        _ => {
            if let Some(rest) = id.strip_prefix("const:") {
                let v: f64 = rest.parse().map_err(|_| {
                    LabError::InvalidConfig(format!("bad h probe parameter: {id}"))
                })?;
                Ok(HProbe::Const(v))
            } else {
                Err(LabError::InvalidConfig(format!("unknown h probe: {id}")))
            }
        }
    }
}

/// Run provenance written next to every verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub config_path: String,
    pub out_dir: String,
    /// Unix seconds; the only field two identical runs may differ in.
    pub timestamp: u64,
    pub artifact_version: String,
}

impl RunManifest {
    pub fn new(experiment: &str, cfg: &ExperimentConfig, config_path: &str, out_dir: &str) -> Self {
        RunManifest {
            experiment: experiment.to_string(),
            config_hash: cfg.hash(),
            config_path: config_path.to_string(),
            out_dir: out_dir.to_string(),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}
