//! Run configuration. TOML by default, JSON when the file ends in `.json`.
//!
//! ```toml
//! model = "reqc"            # reqc | stub
//! target = "phase_gate"     # phase_gate | identity
//! output = "out"
//!
//! [grid]
//! preset = "default_reqc_49"        # or: points = [{ gamma = 1.0, delta = 0.0 }]
//! far_threshold = 5.0
//! far_target = "identity"
//!
//! [parametrization]
//! n_harmonics = 24
//! duration_pi = 24.0                # or: duration = 75.398...
//! amplitude_bound = 1.0
//! n_steps = 512
//! scheme = "commutator_free4"       # or: midpoint
//!
//! [optimizer]
//! p_schedule = [10.0, 100.0, 1000.0, 10000.0]
//! max_iters = 500
//! seed = 24301
//!
//! [report]
//! tolerance = 1e-8
//! max_steps = 65536
//!
//! [landscape]
//! gamma = [0.8, 1.2]
//! gamma_points = 41
//! delta = [-3.0, 3.0]
//! delta_points = 121
//! n_steps = 4096
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use pulseforge::minimax::{default_reqc_grid, ParameterGrid, TargetMap, DEFAULT_SEED};
use pulseforge::objective::BoundaryKind;
use pulseforge::propagator::Scheme;
use pulseforge::system::{
    identity_target, phase_gate_target, reqc_model, HamiltonianModel, StubModel, SystemParameters,
    TargetGate,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Reqc,
    Stub,
}

impl ModelKind {
    pub fn build(self) -> Box<dyn HamiltonianModel> {
        match self {
            ModelKind::Reqc => Box::new(reqc_model()),
            ModelKind::Stub => Box::new(StubModel),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    PhaseGate,
    Identity,
}

impl TargetKind {
    pub fn build(self) -> TargetGate {
        match self {
            TargetKind::PhaseGate => phase_gate_target(),
            TargetKind::Identity => identity_target(2).expect("n >= 1"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub gamma: f64,
    pub delta: f64,
    #[serde(default)]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub preset: Option<String>,
    pub points: Option<Vec<PointConfig>>,
    pub far_threshold: f64,
    pub far_target: TargetKind,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            preset: None,
            points: None,
            far_threshold: 5.0,
            far_target: TargetKind::Identity,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParametrizationConfig {
    pub n_harmonics: usize,
    pub duration: Option<f64>,
    /// Duration in units of `π/Ω₀`.
    pub duration_pi: Option<f64>,
    pub amplitude_bound: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
}

impl Default for ParametrizationConfig {
    fn default() -> Self {
        ParametrizationConfig {
            n_harmonics: 24,
            duration: None,
            duration_pi: None,
            amplitude_bound: 1.0,
            n_steps: 512,
            scheme: Scheme::CommutatorFree4,
        }
    }
}

impl ParametrizationConfig {
    pub fn duration(&self) -> f64 {
        match (self.duration, self.duration_pi) {
            (Some(t), _) => t,
            (None, Some(k)) => k * std::f64::consts::PI,
            (None, None) => 24.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub p_schedule: Vec<f64>,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub memory: usize,
    pub seed: u64,
    pub perturbation: f64,
    pub amplitude_constraint: bool,
    pub amplitude_tolerance: f64,
    pub coefficient_box: bool,
    pub boundary: BoundaryKind,
    /// Warm start from a previous `result.json`.
    pub initial: Option<PathBuf>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            p_schedule: vec![10.0, 100.0, 1000.0, 10000.0],
            max_iters: 500,
            grad_tol: 1e-8,
            step_tol: 1e-12,
            memory: 10,
            seed: DEFAULT_SEED,
            perturbation: 1e-3,
            amplitude_constraint: true,
            amplitude_tolerance: 1e-6,
            coefficient_box: true,
            boundary: BoundaryKind::Standard,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Step-doubling tolerance on `U(T)` before fidelities are reported.
    pub tolerance: f64,
    pub max_steps: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            tolerance: 1e-8,
            max_steps: 65536,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeConfig {
    pub gamma: [f64; 2],
    pub gamma_points: usize,
    pub delta: [f64; 2],
    pub delta_points: usize,
    pub n_steps: usize,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig {
            gamma: [0.8, 1.2],
            gamma_points: 41,
            delta: [-3.0, 3.0],
            delta_points: 121,
            n_steps: 4096,
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default = "default_target")]
    pub target: TargetKind,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub parametrization: ParametrizationConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub landscape: LandscapeConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_target() -> TargetKind {
    TargetKind::PhaseGate
}

fn positive(field: &str, value: f64) -> anyhow::Result<()> {
    if !(value.is_finite() && value > 0.0) {
        bail!("{field}: must be a finite number > 0, got {value}");
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str, json: bool) -> anyhow::Result<Self> {
        let config: RunConfig = if json {
            serde_json::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?
        } else {
            toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let json = path.extension().is_some_and(|e| e == "json");
        Self::parse(&text, json).with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let p = &self.parametrization;
        if p.duration.is_some() && p.duration_pi.is_some() {
            bail!("parametrization.duration: set either duration or duration_pi, not both");
        }
        if let Some(t) = p.duration {
            positive("parametrization.duration", t)?;
        }
        if let Some(t) = p.duration_pi {
            positive("parametrization.duration_pi", t)?;
        }
        positive("parametrization.amplitude_bound", p.amplitude_bound)?;
        if p.n_steps == 0 {
            bail!("parametrization.n_steps: must be >= 1");
        }

        let o = &self.optimizer;
        for (i, v) in o.p_schedule.iter().enumerate() {
            positive(&format!("optimizer.p_schedule[{i}]"), *v)?;
        }
        if o.max_iters == 0 {
            bail!("optimizer.max_iters: must be >= 1");
        }
        if o.memory == 0 {
            bail!("optimizer.memory: must be >= 1");
        }
        if !(o.grad_tol >= 0.0) {
            bail!("optimizer.grad_tol: must be >= 0");
        }
        if !(o.step_tol >= 0.0) {
            bail!("optimizer.step_tol: must be >= 0");
        }
        if !(o.perturbation.is_finite() && o.perturbation >= 0.0) {
            bail!("optimizer.perturbation: must be a finite number >= 0");
        }
        positive("optimizer.amplitude_tolerance", o.amplitude_tolerance)?;

        positive("report.tolerance", self.report.tolerance)?;
        if self.report.max_steps < p.n_steps {
            bail!("report.max_steps: must be >= parametrization.n_steps");
        }

        let l = &self.landscape;
        for (field, v) in [("landscape.gamma", l.gamma), ("landscape.delta", l.delta)] {
            if !(v[0].is_finite() && v[1].is_finite() && v[0] <= v[1]) {
                bail!("{field}: must be [start, end] with start <= end");
            }
        }
        if l.gamma[0] < 0.0 {
            bail!("landscape.gamma: must be >= 0");
        }
        if l.gamma_points == 0 || l.delta_points == 0 {
            bail!("landscape.gamma_points/delta_points: must be >= 1");
        }
        if l.n_steps == 0 {
            bail!("landscape.n_steps: must be >= 1");
        }

        if !(self.grid.far_threshold >= 0.0) {
            bail!("grid.far_threshold: must be >= 0");
        }
        self.build_grid()?;
        Ok(())
    }

    pub fn build_grid(&self) -> anyhow::Result<ParameterGrid> {
        match (&self.grid.preset, &self.grid.points) {
            (Some(_), Some(_)) => bail!("grid: set either preset or points, not both"),
            (Some(name), None) if name != "default_reqc_49" => {
                bail!("grid.preset: unknown preset {name:?} (known: \"default_reqc_49\")")
            }
            (_, None) => Ok(default_reqc_grid()),
            (None, Some(points)) => {
                let mut xs = Vec::with_capacity(points.len());
                let mut ws = Vec::with_capacity(points.len());
                for (i, pt) in points.iter().enumerate() {
                    let xi = SystemParameters::new(pt.gamma, pt.delta)
                        .map_err(|e| anyhow::anyhow!("grid.points[{i}]: {e}"))?;
                    xs.push(xi);
                    ws.push(pt.weight.unwrap_or(1.0));
                }
                ParameterGrid::new(xs, Some(ws)).map_err(|e| anyhow::anyhow!("{e}"))
            }
        }
    }

    pub fn targets(&self) -> TargetMap {
        TargetMap {
            near: self.target.build(),
            far: self.grid.far_target.build(),
            far_threshold: self.grid.far_threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = RunConfig::parse("", false).unwrap();
        assert_eq!(c.model, ModelKind::Reqc);
        assert_eq!(c.build_grid().unwrap().points.len(), 49);
        assert!((c.parametrization.duration() - 24.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn negative_duration_names_field() {
        let err = RunConfig::parse("[parametrization]\nduration = -1.0\n", false).unwrap_err();
        assert!(format!("{err:#}").contains("parametrization.duration"), "{err:#}");
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let err = RunConfig::parse("[optimizer]\nmax_iter = 3\n", false).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("max_iter") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn json_and_toml_agree() {
        let t = RunConfig::parse(
            "model = \"stub\"\n[grid]\npoints = [{ gamma = 1.0, delta = 0.5 }]\n[parametrization]\nduration = 3.0\n",
            false,
        )
        .unwrap();
        let j = RunConfig::parse(
            r#"{"model": "stub", "grid": {"points": [{"gamma": 1.0, "delta": 0.5}]}, "parametrization": {"duration": 3.0}}"#,
            true,
        )
        .unwrap();
        assert_eq!(t.build_grid().unwrap(), j.build_grid().unwrap());
        assert_eq!(t.parametrization.duration(), j.parametrization.duration());
    }

    #[test]
    fn duplicate_points_are_rejected() {
        let err = RunConfig::parse("[grid]\npoints = [{ gamma = 1.0, delta = 0.0 }, { gamma = 1.0, delta = 0.0 }]\n", false)
            .unwrap_err();
        assert!(format!("{err:#}").contains("grid.points"));
    }

    #[test]
    fn both_durations_are_rejected() {
        let err = RunConfig::parse("[parametrization]\nduration = 1.0\nduration_pi = 2.0\n", false).unwrap_err();
        assert!(format!("{err:#}").contains("duration"));
    }
}
