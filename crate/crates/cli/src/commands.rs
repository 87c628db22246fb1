use std::path::Path;

use anyhow::{bail, Context};
use pulseforge::baselines::{
    default_sech_sequence, landscape, linspace, naive_2pi_params, plot_script, SechDefaults,
};
use pulseforge::checks::{self, CheckOptions};
use pulseforge::control::{synthesize, ControlSource, ControlWaveform, FourierParametrization};
use pulseforge::linalg;
use pulseforge::minimax::{
    converged_grid_steps, grid_fidelities, history_csv, optimize_observed, resonant_guess,
    AmplitudeOptions, MinimaxOptions, ParameterGrid, TargetMap,
};
use pulseforge::objective::{ObjectiveSettings, PenaltySpec};
use pulseforge::optim::{LbfgsbOptions, Termination};
use pulseforge::propagator::{propagate_forward, StepControls};
use pulseforge::system::HamiltonianModel;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointResult {
    pub gamma: f64,
    pub delta: f64,
    pub weight: f64,
    pub far: bool,
    /// `1 − T²` at the reported step count.
    pub j: f64,
    pub trace_fidelity: f64,
    pub worst_case_fidelity: f64,
    pub bound_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridReport {
    pub points: Vec<PointResult>,
    pub j_max: f64,
    /// Largest `1 − F` over the grid.
    pub worst_infidelity: f64,
    pub report_steps: usize,
    pub step_doubling_error: f64,
    pub unitarity_defect: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub coefficients: FourierParametrization,
    /// `J` at each grid point on the optimization grid.
    pub per_point_j: Vec<f64>,
    pub j_max: f64,
    pub termination: Termination,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub max_violation: f64,
    pub rescaled: bool,
    pub optimization_steps: usize,
    pub report: GridReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineResult {
    pub baseline: String,
    pub report: GridReport,
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn check_channels(model: &dyn HamiltonianModel, source: &dyn ControlSource) -> anyhow::Result<()> {
    if source.n_channels() != model.n_controls() {
        bail!(
            "waveform has {} channels but the model expects {}",
            source.n_channels(),
            model.n_controls()
        );
    }
    Ok(())
}

/// Fidelities at a step count where `U(T)` has converged at every grid point.
pub fn grid_report(
    config: &RunConfig,
    model: &dyn HamiltonianModel,
    grid: &ParameterGrid,
    targets: &TargetMap,
    source: &dyn ControlSource,
) -> anyhow::Result<GridReport> {
    let p = &config.parametrization;
    let (n, err) = converged_grid_steps(
        model,
        grid,
        source,
        p.n_steps,
        p.scheme,
        config.report.tolerance,
        config.report.max_steps,
    )?;
    let reports = grid_fidelities(model, grid, targets, source, n, p.scheme)?;
    let controls = StepControls::from_source(source, n, p.scheme)?;
    let mut unitarity = 0.0f64;
    for xi in &grid.points {
        let u = propagate_forward(model, xi, &controls)?;
        unitarity = unitarity.max(linalg::unitarity_defect(u.final_operator()));
    }
    let points: Vec<PointResult> = grid
        .points
        .iter()
        .zip(&grid.weights)
        .zip(&reports)
        .map(|((xi, &weight), r)| PointResult {
            gamma: xi.gamma,
            delta: xi.delta,
            weight,
            far: targets.is_far(xi),
            j: 1.0 - r.trace_fidelity * r.trace_fidelity,
            trace_fidelity: r.trace_fidelity,
            worst_case_fidelity: r.worst_case_fidelity,
            bound_gap: r.bound_gap,
        })
        .collect();
    Ok(GridReport {
        j_max: points.iter().map(|p| p.j).fold(f64::NEG_INFINITY, f64::max),
        worst_infidelity: points
            .iter()
            .map(|p| 1.0 - p.worst_case_fidelity)
            .fold(f64::NEG_INFINITY, f64::max),
        points,
        report_steps: n,
        step_doubling_error: err,
        unitarity_defect: unitarity,
    })
}

fn load_initial(config: &RunConfig, model: &dyn HamiltonianModel) -> anyhow::Result<FourierParametrization> {
    let p = &config.parametrization;
    let o = &config.optimizer;
    let initial = match &o.initial {
        Some(path) => {
            let previous = read_result(path)?;
            if previous.n_controls != model.n_controls() {
                bail!("optimizer.initial: {} has {} channels, model expects {}", path.display(), previous.n_controls, model.n_controls());
            }
            previous
        }
        None => resonant_guess(
            model.n_controls(),
            p.n_harmonics,
            p.duration(),
            p.amplitude_bound,
            o.perturbation,
            o.seed,
        )?,
    };
    Ok(initial)
}

fn read_result(path: &Path) -> anyhow::Result<FourierParametrization> {
    #[derive(Deserialize)]
    struct Coefficients {
        coefficients: FourierParametrization,
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: Coefficients =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    parsed.coefficients.validate()?;
    Ok(parsed.coefficients)
}

pub fn optimize(config: &RunConfig, quiet: bool) -> anyhow::Result<u8> {
    let model = config.model.build();
    let grid = config.build_grid()?;
    let targets = config.targets();
    let initial = load_initial(config, model.as_ref())?;
    let p = &config.parametrization;
    let o = &config.optimizer;
    let options = MinimaxOptions {
        p_schedule: o.p_schedule.clone(),
        solver: LbfgsbOptions {
            memory: o.memory,
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            step_tol: o.step_tol,
            ..LbfgsbOptions::default()
        },
        amplitude: AmplitudeOptions {
            enabled: o.amplitude_constraint,
            tolerance: o.amplitude_tolerance,
            ..AmplitudeOptions::default()
        },
        settings: ObjectiveSettings {
            n_steps: p.n_steps,
            scheme: p.scheme,
            boundary: o.boundary,
        },
        penalty: PenaltySpec::none(),
        coefficient_box: o.coefficient_box,
    };

    let out = &config.output;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let result = optimize_observed(model.as_ref(), &grid, &targets, &initial, &options, &mut |row| {
        if !quiet && row.iter % 10 == 0 {
            eprintln!(
                "iter {:>5}  J_max {:.4e}  aggregate {:.6e}  |pg| {:.2e}",
                row.iter, row.j_max, row.aggregate, row.grad_norm
            );
        }
    })?;

    let report = grid_report(config, model.as_ref(), &grid, &targets, &result.coefficients)?;
    let waveform = synthesize(&result.coefficients, report.report_steps)?;
    let converged = result.converged();
    let run = RunResult {
        per_point_j: result.per_point_j.clone(),
        j_max: result.j_max,
        termination: result.termination,
        converged,
        iterations: result.iterations,
        evaluations: result.evaluations,
        max_violation: result.max_violation,
        rescaled: result.rescaled,
        optimization_steps: p.n_steps,
        coefficients: result.coefficients,
        report,
    };
    write(out, "result.json", &serde_json::to_string_pretty(&run)?)?;
    write(out, "history.csv", &history_csv(&result.history))?;
    write(out, "waveform.csv", &waveform.to_csv())?;
    if !quiet {
        eprintln!(
            "{:?} after {} iterations: J_max {:.3e}, worst 1 - F {:.3e} at {} steps",
            run.termination, run.iterations, run.report.j_max, run.report.worst_infidelity, run.report.report_steps
        );
    }
    Ok(if converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

pub enum PulseSource {
    Waveform(std::path::PathBuf),
    Naive,
    Sech,
}

fn build_source(config: &RunConfig, source: &PulseSource) -> anyhow::Result<(Box<dyn ControlSource>, String)> {
    let duration = config.parametrization.duration();
    Ok(match source {
        PulseSource::Naive => (Box::new(naive_2pi_params(duration)?), "naive 2π pulse".into()),
        PulseSource::Sech => (
            Box::new(default_sech_sequence(duration, &SechDefaults::default())?),
            "sech sequence".into(),
        ),
        PulseSource::Waveform(path) => {
            if !path.exists() {
                bail!("waveform {} does not exist", path.display());
            }
            if path.extension().is_some_and(|e| e == "json") {
                (Box::new(read_result(path)?), "optimized pulse".into())
            } else {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let w = ControlWaveform::from_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
                (Box::new(w), "waveform".into())
            }
        }
    })
}

pub fn landscape_cmd(config: &RunConfig, source: &PulseSource, running_max: bool) -> anyhow::Result<u8> {
    let model = config.model.build();
    let (source, title) = build_source(config, source)?;
    check_channels(model.as_ref(), source.as_ref())?;
    let l = &config.landscape;
    let gammas = linspace(l.gamma[0], l.gamma[1], l.gamma_points);
    let deltas = linspace(l.delta[0], l.delta[1], l.delta_points);
    let map = landscape(
        model.as_ref(),
        source.as_ref(),
        &config.targets(),
        &gammas,
        &deltas,
        l.n_steps,
        config.parametrization.scheme,
    )?;
    let out = &config.output;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(out, "landscape.csv", &map.to_csv())?;
    write(out, "plot_landscape.py", &plot_script("landscape.csv", &title))?;
    if running_max {
        write(out, "landscape_runmax.csv", &map.running_max().to_csv())?;
        write(
            out,
            "plot_landscape_runmax.py",
            &plot_script("landscape_runmax.csv", &format!("{title}, running max")),
        )?;
    }
    let worst = map
        .cells
        .iter()
        .map(|c| 1.0 - c.report.worst_case_fidelity)
        .fold(f64::NEG_INFINITY, f64::max);
    eprintln!("{} cells, worst 1 - F {:.3e}", map.cells.len(), worst);
    Ok(EXIT_OK)
}

pub fn baseline_cmd(config: &RunConfig, source: &PulseSource, name: &str) -> anyhow::Result<u8> {
    let model = config.model.build();
    let (source, _) = build_source(config, source)?;
    check_channels(model.as_ref(), source.as_ref())?;
    let grid = config.build_grid()?;
    let report = grid_report(config, model.as_ref(), &grid, &config.targets(), source.as_ref())?;
    let waveform = ControlWaveform::from_source(source.as_ref(), report.report_steps)?;
    let out = &config.output;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    eprintln!(
        "{name}: J_max {:.3e}, worst 1 - F {:.3e} at {} steps",
        report.j_max, report.worst_infidelity, report.report_steps
    );
    let result = BaselineResult {
        baseline: name.into(),
        report,
    };
    write(out, "baseline.json", &serde_json::to_string_pretty(&result)?)?;
    write(out, "waveform.csv", &waveform.to_csv())?;
    Ok(EXIT_OK)
}

pub fn check_cmd(options: &CheckOptions, out: &Path) -> anyhow::Result<u8> {
    let mut failed = Vec::new();
    for suite in checks::run_all(options)? {
        println!(
            "{:<10} cases {:>6}  max error {:.3e}  tolerance {:.0e}  {}",
            suite.name,
            suite.cases,
            suite.max_error,
            suite.tolerance,
            if suite.passed() { "PASS" } else { "FAIL" }
        );
        if let Some(case) = suite.failure {
            failed.push(case);
        }
    }
    if failed.is_empty() {
        return Ok(EXIT_OK);
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(out, "check_failure.json", &serde_json::to_string_pretty(&failed)?)?;
    eprintln!("failing cases written to {}", out.join("check_failure.json").display());
    Ok(EXIT_CHECK_FAILED)
}
