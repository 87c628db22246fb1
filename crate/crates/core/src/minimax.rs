//! Robust design over a discrete set of system parameters: minimize the worst
//! per-point cost under amplitude bounds.
//!
//! The max is smoothed by a log-sum-exp aggregate whose sharpness `p` is raised
//! in stages. Amplitude bounds on each quadrature pair are handled by an
//! augmented Lagrangian over sampled constraint points, and the coefficients
//! additionally carry the box bounds implied by feasibility.

use std::cell::RefCell;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{
    peak_amplitude, ControlSource, FourierParametrization, FourierTerm, SynthesisJacobian,
};
use crate::error::{Error, Result};
use crate::objective::{FidelityReport, ObjectiveSettings, ObjectiveValue, PenaltySpec, PreparedControls};
use crate::propagator::{propagate_forward, step_doubling_error, Scheme, StepControls};
use crate::optim::{self, Bounds, LbfgsbOptions, Termination};
use crate::system::{identity_target, phase_gate_target, HamiltonianModel, SystemParameters, TargetGate};

pub const DEFAULT_SEED: u64 = 0x5EED;

/// The discrete parameter set with optional per-point weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub points: Vec<SystemParameters>,
    pub weights: Vec<f64>,
}

impl ParameterGrid {
    pub fn new(points: Vec<SystemParameters>, weights: Option<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("grid.points", "must not be empty"));
        }
        for (i, a) in points.iter().enumerate() {
            if points[..i].iter().any(|b| b == a) {
                return Err(Error::invalid(
                    "grid.points",
                    format!("duplicate point (gamma = {}, delta = {})", a.gamma, a.delta),
                ));
            }
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; points.len()]);
        if weights.len() != points.len() {
            return Err(Error::invalid("grid.weights", "must have one weight per point"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("grid.weights", "must be finite and > 0"));
        }
        Ok(ParameterGrid { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub const NEAR_GAMMAS: [f64; 5] = [0.9, 0.95, 1.0, 1.05, 1.1];
pub const NEAR_DELTAS: [f64; 7] = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
pub const FAR_DELTAS: [f64; 7] = [5.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0];

/// 5×7 lattice around the ideal point plus 14 far-detuned points at `γ = 1`.
pub fn default_reqc_grid() -> ParameterGrid {
    let mut points = Vec::with_capacity(49);
    for &gamma in &NEAR_GAMMAS {
        for &delta in &NEAR_DELTAS {
            points.push(SystemParameters { gamma, delta });
        }
    }
    for &d in &FAR_DELTAS {
        points.push(SystemParameters { gamma: 1.0, delta: -d });
        points.push(SystemParameters { gamma: 1.0, delta: d });
    }
    ParameterGrid::new(points, None).expect("default grid is valid")
}

/// Gate target near resonance, `far` (normally the identity) for
/// `|δ| ≥ far_threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMap {
    pub near: TargetGate,
    pub far: TargetGate,
    pub far_threshold: f64,
}

impl TargetMap {
    pub fn reqc() -> Self {
        TargetMap {
            near: phase_gate_target(),
            far: identity_target(2).expect("n >= 1"),
            far_threshold: 5.0,
        }
    }

    /// Same target everywhere.
    pub fn uniform(target: TargetGate) -> Self {
        TargetMap {
            near: target.clone(),
            far: target,
            far_threshold: f64::INFINITY,
        }
    }

    pub fn is_far(&self, xi: &SystemParameters) -> bool {
        xi.delta.abs() >= self.far_threshold
    }

    pub fn target_for(&self, xi: &SystemParameters) -> &TargetGate {
        if self.is_far(xi) {
            &self.far
        } else {
            &self.near
        }
    }
}

/// Per-point cost and gradient over the same coefficient vector.
pub trait PointObjective: Sync {
    fn n_points(&self) -> usize;

    fn weight(&self, _i: usize) -> f64 {
        1.0
    }

    fn evaluate(&self, i: usize, coefficients: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn evaluate_all(&self, coefficients: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        (0..self.n_points())
            .into_par_iter()
            .map(|i| self.evaluate(i, coefficients))
            .collect()
    }
}

/// `J(ξ, ε)` for every point of a grid, with the target chosen by a map.
pub struct GridObjective<'a> {
    pub model: &'a dyn HamiltonianModel,
    pub grid: &'a ParameterGrid,
    pub targets: &'a TargetMap,
    pub template: FourierParametrization,
    pub penalty: PenaltySpec,
    pub settings: ObjectiveSettings,
}

impl GridObjective<'_> {
    fn prepare(&self, coefficients: &[f64]) -> Result<PreparedControls> {
        PreparedControls::new(
            &self.template.with_coefficients(coefficients.to_vec()),
            &self.penalty,
            &self.settings,
        )
    }

    fn evaluate_prepared(&self, prepared: &PreparedControls, i: usize) -> Result<ObjectiveValue> {
        let xi = &self.grid.points[i];
        prepared
            .evaluate(self.model, xi, self.targets.target_for(xi))
            .map_err(|e| Error::AtGridPoint {
                xi: *xi,
                source: Box::new(e),
            })
    }
}

impl PointObjective for GridObjective<'_> {
    fn n_points(&self) -> usize {
        self.grid.len()
    }

    fn weight(&self, i: usize) -> f64 {
        self.grid.weights[i]
    }

    fn evaluate(&self, i: usize, coefficients: &[f64]) -> Result<(f64, Vec<f64>)> {
        let r = self.evaluate_prepared(&self.prepare(coefficients)?, i)?;
        Ok((r.value, r.gradient))
    }

    fn evaluate_all(&self, coefficients: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        let prepared = self.prepare(coefficients)?;
        (0..self.n_points())
            .into_par_iter()
            .map(|i| {
                self.evaluate_prepared(&prepared, i)
                    .map(|r| (r.value, r.gradient))
            })
            .collect()
    }
}

/// Independent `objective_and_gradient` at every grid point, in grid order.
pub fn evaluate_grid(
    model: &dyn HamiltonianModel,
    grid: &ParameterGrid,
    targets: &TargetMap,
    params: &FourierParametrization,
    penalty: &PenaltySpec,
    settings: &ObjectiveSettings,
) -> Result<Vec<ObjectiveValue>> {
    let objective = GridObjective {
        model,
        grid,
        targets,
        template: params.clone(),
        penalty: *penalty,
        settings: *settings,
    };
    let prepared = objective.prepare(&params.coefficients)?;
    (0..grid.len())
        .into_par_iter()
        .map(|i| objective.evaluate_prepared(&prepared, i))
        .collect()
}

/// `(1/p) log Σ w_i e^{p J_i}` and its gradient `Σ s_i ∇J_i` with softmax
/// weights `s_i`.
pub fn aggregate(js: &[f64], grads: &[Vec<f64>], weights: &[f64], p: f64) -> Result<(f64, Vec<f64>)> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::invalid("p", "must be finite and > 0"));
    }
    if js.is_empty() || js.len() != grads.len() || js.len() != weights.len() {
        return Err(Error::DimensionMismatch("aggregate inputs differ in length".into()));
    }
    let m = js.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::NonFinite("per-point costs".into()));
    }
    let e: Vec<f64> = js
        .iter()
        .zip(weights)
        .map(|(j, w)| w * (p * (j - m)).exp())
        .collect();
    let sum: f64 = e.iter().sum();
    let value = m + sum.ln() / p;
    let n = grads[0].len();
    let mut gradient = vec![0.0; n];
    for (g, ei) in grads.iter().zip(&e) {
        let s = ei / sum;
        if s == 0.0 {
            continue;
        }
        for (o, v) in gradient.iter_mut().zip(g) {
            *o += s * v;
        }
    }
    Ok((value, gradient))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeOptions {
    pub enabled: bool,
    /// Allowed excess of any pair magnitude over the bound.
    pub tolerance: f64,
    /// Constraint samples over `[0, T]`; 0 uses the propagation grid.
    pub samples: usize,
    pub initial_penalty: f64,
    pub max_outer: usize,
}

impl Default for AmplitudeOptions {
    fn default() -> Self {
        AmplitudeOptions {
            enabled: true,
            tolerance: 1e-6,
            samples: 0,
            initial_penalty: 10.0,
            max_outer: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxOptions {
    /// Sharpness stages; empty optimizes the plain sum of weighted costs of a
    /// single point, i.e. `J` itself.
    pub p_schedule: Vec<f64>,
    /// `max_iters` is the budget of each sharpness stage, shared by its
    /// amplitude-multiplier rounds.
    pub solver: LbfgsbOptions,
    pub amplitude: AmplitudeOptions,
    pub settings: ObjectiveSettings,
    pub penalty: PenaltySpec,
    /// Apply `|dc| ≤ Ω_max`, `|a_k|, |b_k| ≤ 2Ω_max`.
    pub coefficient_box: bool,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        MinimaxOptions {
            p_schedule: vec![10.0, 100.0, 1000.0, 10000.0],
            solver: LbfgsbOptions {
                max_iters: 500,
                ..LbfgsbOptions::default()
            },
            amplitude: AmplitudeOptions::default(),
            settings: ObjectiveSettings::new(512),
            penalty: PenaltySpec::none(),
            coefficient_box: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub j_max: f64,
    pub aggregate: f64,
    pub grad_norm: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimaxResult {
    pub coefficients: FourierParametrization,
    pub per_point_j: Vec<f64>,
    pub j_max: f64,
    pub history: Vec<HistoryRow>,
    pub termination: Termination,
    pub iterations: usize,
    pub evaluations: usize,
    /// Largest pair-amplitude excess on the verification grid.
    pub max_violation: f64,
    /// Whether the final safeguard had to scale the waveform down.
    pub rescaled: bool,
}

impl MinimaxResult {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }
}

pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from("iter,J_max,aggregate,grad_norm,max_violation\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e}",
            r.iter, r.j_max, r.aggregate, r.grad_norm, r.max_violation
        );
    }
    out
}

/// Resonant `2π` pulse on the first quadrature (`Ω = 2π/T` at `γ = 1`) with
/// uniform perturbations of size `perturbation` on every other coefficient.
pub fn resonant_initial_guess(
    n_harmonics: usize,
    duration: f64,
    amplitude_bound: f64,
    perturbation: f64,
    seed: u64,
) -> Result<FourierParametrization> {
    resonant_guess(4, n_harmonics, duration, amplitude_bound, perturbation, seed)
}

/// Constant `2π/T` on channel 0, uniform noise in `[−perturbation, perturbation]`
/// on every other coefficient.
pub fn resonant_guess(
    n_controls: usize,
    n_harmonics: usize,
    duration: f64,
    amplitude_bound: f64,
    perturbation: f64,
    seed: u64,
) -> Result<FourierParametrization> {
    let mut params = FourierParametrization::zeros(n_controls, n_harmonics, duration, amplitude_bound)?;
    if n_controls == 0 {
        return Ok(params);
    }
    let dc = params.index(0, FourierTerm::Dc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (k, v) in params.coefficients.iter_mut().enumerate() {
        if k != dc && perturbation > 0.0 {
            *v = rng.gen_range(-perturbation..=perturbation);
        }
    }
    params.set(0, FourierTerm::Dc, std::f64::consts::TAU / duration);
    Ok(params)
}

/// Fidelities of a fixed pulse at every grid point.
pub fn grid_fidelities(
    model: &dyn HamiltonianModel,
    grid: &ParameterGrid,
    targets: &TargetMap,
    source: &dyn ControlSource,
    n_steps: usize,
    scheme: Scheme,
) -> Result<Vec<FidelityReport>> {
    let controls = StepControls::from_source(source, n_steps, scheme)?;
    grid.points
        .par_iter()
        .map(|xi| {
            propagate_forward(model, xi, &controls)
                .and_then(|fwd| FidelityReport::new(targets.target_for(xi), fwd.final_operator(), model.qubit_indices()))
                .map_err(|e| Error::AtGridPoint { xi: *xi, source: Box::new(e) })
        })
        .collect()
}

/// Step count at which the step-doubling error is at most `tolerance` at every
/// grid point, starting from `n_steps` and capped at `max_steps`. Returns the
/// count and the largest error at it.
pub fn converged_grid_steps(
    model: &dyn HamiltonianModel,
    grid: &ParameterGrid,
    source: &dyn ControlSource,
    n_steps: usize,
    scheme: Scheme,
    tolerance: f64,
    max_steps: usize,
) -> Result<(usize, f64)> {
    let mut n = n_steps.max(1);
    loop {
        let errors = grid
            .points
            .par_iter()
            .map(|xi| step_doubling_error(model, xi, source, n, scheme))
            .collect::<Result<Vec<f64>>>()?;
        let worst = errors.into_iter().fold(0.0, f64::max);
        if worst <= tolerance || 2 * n > max_steps {
            return Ok((n, worst));
        }
        n *= 2;
    }
}

/// Coefficient box implied by `|ε| ≤ Ω_max`.
pub fn coefficient_bounds(params: &FourierParametrization) -> Bounds {
    let b = params.amplitude_bound;
    let n = params.n_coefficients();
    let mut lower = vec![-2.0 * b; n];
    let mut upper = vec![2.0 * b; n];
    for c in 0..params.n_controls {
        let k = params.index(c, FourierTerm::Dc);
        lower[k] = -b;
        upper[k] = b;
    }
    Bounds::new(lower, upper)
}

/// Sampled pair constraints `g = (ε_i² + ε_q² − Ω²)/(2Ω) ≤ 0`.
struct AmplitudeConstraints {
    jacobian: SynthesisJacobian,
    bound: f64,
    n_pairs: usize,
}

impl AmplitudeConstraints {
    fn new(params: &FourierParametrization, samples: usize) -> Result<Self> {
        if params.n_controls % 2 != 0 {
            return Err(Error::invalid("n_controls", "amplitude bounds need quadrature pairs"));
        }
        let times = params.time_grid(samples);
        Ok(AmplitudeConstraints {
            jacobian: SynthesisJacobian::at_times(params, &times),
            bound: params.amplitude_bound,
            n_pairs: params.n_controls / 2,
        })
    }

    fn values(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let samples = self.jacobian.apply(x);
        let g = samples
            .iter()
            .flat_map(|s| {
                (0..self.n_pairs).map(move |k| {
                    let (a, b) = (s[2 * k], s[2 * k + 1]);
                    (a * a + b * b - self.bound * self.bound) / (2.0 * self.bound)
                })
            })
            .collect();
        (g, samples)
    }

    fn max_violation(&self, x: &[f64]) -> f64 {
        let (_, samples) = self.values(x);
        samples
            .iter()
            .flat_map(|s| (0..self.n_pairs).map(move |k| s[2 * k].hypot(s[2 * k + 1]) - self.bound))
            .fold(0.0, f64::max)
    }

    /// PHR term `(1/2ρ) Σ [max(0, μ + ρg)² − μ²]` and its gradient.
    fn lagrangian(&self, x: &[f64], mu: &[f64], rho: f64) -> (f64, Vec<f64>) {
        let (g, samples) = self.values(x);
        let m = 2 * self.n_pairs;
        let mut value = 0.0;
        let mut sens = vec![0.0; samples.len() * m];
        for (s, sample) in samples.iter().enumerate() {
            for k in 0..self.n_pairs {
                let idx = s * self.n_pairs + k;
                let shifted = (mu[idx] + rho * g[idx]).max(0.0);
                value += (shifted * shifted - mu[idx] * mu[idx]) / (2.0 * rho);
                if shifted > 0.0 {
                    sens[s * m + 2 * k] = shifted * sample[2 * k] / self.bound;
                    sens[s * m + 2 * k + 1] = shifted * sample[2 * k + 1] / self.bound;
                }
            }
        }
        (value, self.jacobian.transpose_apply(&sens))
    }
}

struct Evaluation {
    x: Vec<f64>,
    j_max: f64,
    aggregate: f64,
    violation: f64,
}

/// Minimax over the grid, starting from `initial`.
pub fn optimize(
    model: &dyn HamiltonianModel,
    grid: &ParameterGrid,
    targets: &TargetMap,
    initial: &FourierParametrization,
    options: &MinimaxOptions,
) -> Result<MinimaxResult> {
    let objective = GridObjective {
        model,
        grid,
        targets,
        template: initial.clone(),
        penalty: options.penalty,
        settings: options.settings,
    };
    optimize_points(&objective, initial, options)
}

/// As [`optimize`], reporting progress.
pub fn optimize_observed(
    model: &dyn HamiltonianModel,
    grid: &ParameterGrid,
    targets: &TargetMap,
    initial: &FourierParametrization,
    options: &MinimaxOptions,
    progress: &mut dyn FnMut(&HistoryRow),
) -> Result<MinimaxResult> {
    let objective = GridObjective {
        model,
        grid,
        targets,
        template: initial.clone(),
        penalty: options.penalty,
        settings: options.settings,
    };
    optimize_points_observed(&objective, initial, options, progress)
}

/// As [`optimize`] for any per-point objective over `initial`'s coefficients.
pub fn optimize_points(
    objective: &dyn PointObjective,
    initial: &FourierParametrization,
    options: &MinimaxOptions,
) -> Result<MinimaxResult> {
    optimize_points_observed(objective, initial, options, &mut |_| {})
}

/// As [`optimize_points`], reporting every history row as it is recorded.
pub fn optimize_points_observed(
    objective: &dyn PointObjective,
    initial: &FourierParametrization,
    options: &MinimaxOptions,
    progress: &mut dyn FnMut(&HistoryRow),
) -> Result<MinimaxResult> {
    initial.validate()?;
    if objective.n_points() == 0 {
        return Err(Error::invalid("grid.points", "must not be empty"));
    }
    if options.p_schedule.is_empty() && objective.n_points() != 1 {
        return Err(Error::invalid(
            "p_schedule",
            "may only be empty for a single-point grid",
        ));
    }
    if options.p_schedule.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::invalid("p_schedule", "entries must be finite and > 0"));
    }
    let weights: Vec<f64> = (0..objective.n_points()).map(|i| objective.weight(i)).collect();
    let amp = &options.amplitude;
    let constraint_samples = if amp.samples > 0 { amp.samples } else { options.settings.n_steps };
    let constraints = if amp.enabled && initial.n_controls % 2 == 0 {
        Some(AmplitudeConstraints::new(initial, constraint_samples)?)
    } else {
        None
    };
    let bounds = if options.coefficient_box {
        coefficient_bounds(initial)
    } else {
        Bounds::unbounded(initial.n_coefficients())
    };

    let n_constraints = constraints
        .as_ref()
        .map_or(0, |c| c.jacobian.times.len() * c.n_pairs);
    let mut mu = vec![0.0; n_constraints];
    let mut rho = amp.initial_penalty;

    let mut x = initial.coefficients.clone();
    bounds.project(&mut x);
    let mut history = Vec::new();
    let mut iter_offset = 0;
    let mut evaluations = 0;
    let mut termination = Termination::MaxIterations;

    let stages: Vec<Option<f64>> = if options.p_schedule.is_empty() {
        vec![None]
    } else {
        options.p_schedule.iter().map(|&p| Some(p)).collect()
    };

    for p in stages {
        let mut previous_violation = f64::INFINITY;
        let mut stage_iterations = 0;
        for _outer in 0..amp.max_outer.max(1) {
            if stage_iterations >= options.solver.max_iters {
                break;
            }
            let solver = LbfgsbOptions {
                max_iters: options.solver.max_iters - stage_iterations,
                ..options.solver.clone()
            };
            let cache: RefCell<Vec<Evaluation>> = RefCell::new(Vec::new());
            let lagrangian = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
                let per_point = objective.evaluate_all(z)?;
                let (js, grads): (Vec<f64>, Vec<Vec<f64>>) = per_point.into_iter().unzip();
                let j_max = js.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let (mut value, mut gradient) = match p {
                    Some(p) => aggregate(&js, &grads, &weights, p)?,
                    None => (js[0], grads.into_iter().next().unwrap()),
                };
                let aggregate_value = value;
                let mut violation = 0.0;
                if let Some(c) = &constraints {
                    let (v, g) = c.lagrangian(z, &mu, rho);
                    if v != 0.0 {
                        value += v;
                        for (o, gi) in gradient.iter_mut().zip(&g) {
                            *o += gi;
                        }
                    }
                    violation = c.max_violation(z);
                }
                cache.borrow_mut().push(Evaluation {
                    x: z.to_vec(),
                    j_max,
                    aggregate: aggregate_value,
                    violation,
                });
                Ok((value, gradient))
            };
            let observer = |info: &optim::IterationInfo, z: &[f64]| {
                let mut cache = cache.borrow_mut();
                if let Some(e) = cache.iter().rev().find(|e| e.x == z) {
                    let row = HistoryRow {
                        iter: iter_offset + info.iteration,
                        j_max: e.j_max,
                        aggregate: e.aggregate,
                        grad_norm: info.projected_grad_norm,
                        max_violation: e.violation,
                    };
                    progress(&row);
                    history.push(row);
                }
                cache.clear();
            };
            let result = optim::minimize(lagrangian, x.clone(), &bounds, &solver, observer)?;
            iter_offset += result.iterations;
            stage_iterations += result.iterations.max(1);
            evaluations += result.evaluations;
            termination = result.termination;
            x = result.x;

            let Some(c) = &constraints else { break };
            let violation = c.max_violation(&x);
            if violation <= amp.tolerance {
                break;
            }
            let (g, _) = c.values(&x);
            for (m, gi) in mu.iter_mut().zip(&g) {
                *m = (*m + rho * gi).max(0.0);
            }
            if violation > 0.25 * previous_violation {
                rho *= 10.0;
            }
            previous_violation = violation;
        }
    }

    let mut params = initial.with_coefficients(x);
    let mut rescaled = false;
    let mut max_violation = 0.0;
    if constraints.is_some() {
        let bound = params.amplitude_bound;
        let peak = peak_amplitude(&params)?;
        max_violation = (peak - bound).max(0.0);
        if max_violation > amp.tolerance {
            let scale = bound / peak;
            let scaled = params.coefficients.iter().map(|v| v * scale).collect();
            params = params.with_coefficients(scaled);
            rescaled = true;
            max_violation = (peak_amplitude(&params)? - bound).max(0.0);
        }
    }

    let per_point_j: Vec<f64> = objective
        .evaluate_all(&params.coefficients)?
        .into_iter()
        .map(|(j, _)| j)
        .collect();
    let j_max = per_point_j.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    evaluations += 1;
    Ok(MinimaxResult {
        coefficients: params,
        per_point_j,
        j_max,
        history,
        termination,
        iterations: iter_offset,
        evaluations,
        max_violation,
        rescaled,
    })
}
