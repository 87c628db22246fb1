//! Forward and adjoint propagation on a uniform time grid, and the exact
//! discrete control gradient.
//!
//! Every step is a product of exact matrix exponentials of Hamiltonians built
//! from control values at fixed quadrature nodes inside the step, so unitarity
//! is preserved per step and the adjoint pass is the exact transpose of the
//! forward pass. The gradient differentiates each exponential exactly (Fréchet
//! derivative), which makes it the true derivative of the discretized objective.

use serde::{Deserialize, Serialize};

use crate::control::{ControlSource, ControlWaveform};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, StepExponential};
use crate::system::{HamiltonianModel, SystemParameters};

// Gauss–Legendre nodes on [0, 1] and the two-exponential commutator-free weights.
const GAUSS_LO: f64 = 0.211_324_865_405_187_1;
const GAUSS_HI: f64 = 0.788_675_134_594_812_9;
const CF_SMALL: f64 = -0.038_675_134_594_812_87;
const CF_LARGE: f64 = 0.538_675_134_594_812_9;

/// Time-stepping rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// One exponential per step with the control at the step midpoint
    /// (second order).
    Midpoint,
    /// Two exponentials per step built from the two Gauss nodes (fourth order).
    #[default]
    CommutatorFree4,
}

impl Scheme {
    /// Node positions as fractions of the step.
    pub fn nodes(self) -> &'static [f64] {
        match self {
            Scheme::Midpoint => &[0.5],
            Scheme::CommutatorFree4 => &[GAUSS_LO, GAUSS_HI],
        }
    }

    /// Node weights of each exponential, in application order. Weights are
    /// multiplied by the full step `dt`.
    pub fn stages(self) -> &'static [&'static [f64]] {
        match self {
            Scheme::Midpoint => &[&[1.0]],
            Scheme::CommutatorFree4 => &[&[CF_LARGE, CF_SMALL], &[CF_SMALL, CF_LARGE]],
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Scheme::Midpoint => 2,
            Scheme::CommutatorFree4 => 4,
        }
    }
}

/// Control values at every quadrature node of every step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepControls {
    pub time_grid: Vec<f64>,
    pub scheme: Scheme,
    pub n_channels: usize,
    /// `node_times[step * nodes_per_step + node]`.
    pub node_times: Vec<f64>,
    /// Flat `[(step * nodes_per_step + node) * n_channels + channel]`.
    pub node_values: Vec<f64>,
}

impl StepControls {
    /// Evaluates a continuous control source exactly at the nodes of a uniform
    /// `n_steps` grid.
    pub fn from_source(source: &dyn ControlSource, n_steps: usize, scheme: Scheme) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be >= 1"));
        }
        let grid = crate::control::uniform_grid(source.duration(), n_steps);
        let m = source.n_channels();
        let mut node_times = Vec::with_capacity(n_steps * scheme.nodes().len());
        let mut node_values = Vec::with_capacity(node_times.capacity() * m);
        let mut buf = vec![0.0; m];
        for w in grid.windows(2) {
            for &c in scheme.nodes() {
                let t = w[0] + c * (w[1] - w[0]);
                source.sample(t, &mut buf);
                node_times.push(t);
                node_values.extend_from_slice(&buf);
            }
        }
        Self::checked(grid, scheme, m, node_times, node_values)
    }

    /// Uses a sampled waveform's own grid; node values are linear
    /// interpolations of the neighbouring samples (for [`Scheme::Midpoint`] the
    /// average of the two end samples).
    pub fn from_waveform(waveform: &ControlWaveform, scheme: Scheme) -> Result<Self> {
        let m = waveform.n_channels();
        let mut node_times = Vec::new();
        let mut node_values = Vec::new();
        for i in 0..waveform.n_steps() {
            let (t0, t1) = (waveform.time_grid[i], waveform.time_grid[i + 1]);
            for &c in scheme.nodes() {
                node_times.push(t0 + c * (t1 - t0));
                for ch in 0..m {
                    node_values.push((1.0 - c) * waveform.samples[i][ch] + c * waveform.samples[i + 1][ch]);
                }
            }
        }
        Self::checked(waveform.time_grid.clone(), scheme, m, node_times, node_values)
    }

    fn checked(
        time_grid: Vec<f64>,
        scheme: Scheme,
        n_channels: usize,
        node_times: Vec<f64>,
        node_values: Vec<f64>,
    ) -> Result<Self> {
        if node_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control values".into()));
        }
        Ok(StepControls {
            time_grid,
            scheme,
            n_channels,
            node_times,
            node_values,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.time_grid.len() - 1
    }

    pub fn nodes_per_step(&self) -> usize {
        self.scheme.nodes().len()
    }

    pub fn node(&self, step: usize, node: usize) -> &[f64] {
        let k = (step * self.nodes_per_step() + node) * self.n_channels;
        &self.node_values[k..k + self.n_channels]
    }

    /// Steps `range` as a stand-alone schedule (grid keeps absolute times).
    pub fn slice(&self, range: std::ops::Range<usize>) -> StepControls {
        let npn = self.nodes_per_step();
        let m = self.n_channels;
        StepControls {
            time_grid: self.time_grid[range.start..=range.end].to_vec(),
            scheme: self.scheme,
            n_channels: m,
            node_times: self.node_times[range.start * npn..range.end * npn].to_vec(),
            node_values: self.node_values[range.start * npn * m..range.end * npn * m].to_vec(),
        }
    }

    /// Maps node sensitivities of a schedule built by [`Self::from_waveform`]
    /// back onto the waveform samples (transpose of the interpolation).
    /// Result is flat `[sample * n_channels + channel]`.
    pub fn pull_back_to_samples(&self, sensitivity: &NodeSensitivity) -> Vec<f64> {
        let m = self.n_channels;
        let mut out = vec![0.0; self.time_grid.len() * m];
        for step in 0..self.n_steps() {
            for (node, &c) in self.scheme.nodes().iter().enumerate() {
                let g = sensitivity.node(step, node);
                for ch in 0..m {
                    out[step * m + ch] += (1.0 - c) * g[ch];
                    out[(step + 1) * m + ch] += c * g[ch];
                }
            }
        }
        out
    }
}

/// `U(t_i)` on the grid, plus the step factors needed by the adjoint pass.
#[derive(Debug, Clone)]
pub struct EvolutionTrajectory {
    pub time_grid: Vec<f64>,
    pub operators: Vec<CMatrix>,
    pub hermitian: bool,
    pub scheme: Scheme,
    /// `factors[step * n_stages + stage]`, in application order.
    factors: Vec<StepExponential>,
}

impl EvolutionTrajectory {
    pub fn final_operator(&self) -> &CMatrix {
        self.operators.last().unwrap()
    }

    pub fn n_steps(&self) -> usize {
        self.time_grid.len() - 1
    }

    fn stage_factors(&self, step: usize) -> &[StepExponential] {
        let s = self.scheme.stages().len();
        &self.factors[step * s..(step + 1) * s]
    }

    /// Back-propagates `Λ(T) = boundary` with the adjoint of every step factor,
    /// `Λ(t_i) = E_i† Λ(t_{i+1})`.
    pub fn adjoint(&self, boundary: &CMatrix) -> Result<AdjointTrajectory> {
        let d = self.operators[0].nrows();
        if boundary.nrows() != d || boundary.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "boundary is {}x{}, expected {d}x{d}",
                boundary.nrows(),
                boundary.ncols()
            )));
        }
        if !linalg::is_finite(boundary) {
            return Err(Error::NonFinite("adjoint boundary".into()));
        }
        let n = self.n_steps();
        let mut operators = vec![linalg::zeros(d); n + 1];
        operators[n] = boundary.clone();
        for step in (0..n).rev() {
            let mut lambda = operators[step + 1].clone();
            for factor in self.stage_factors(step).iter().rev() {
                lambda = factor.propagator().adjoint() * lambda;
            }
            operators[step] = lambda;
        }
        Ok(AdjointTrajectory {
            time_grid: self.time_grid.clone(),
            operators,
        })
    }
}

/// `Λ(t_i)` on the grid.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub time_grid: Vec<f64>,
    pub operators: Vec<CMatrix>,
}

fn check_model(model: &dyn HamiltonianModel, controls: &StepControls) -> Result<()> {
    if controls.n_channels != model.n_controls() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} controls, schedule has {}",
            model.n_controls(),
            controls.n_channels
        )));
    }
    Ok(())
}

/// Hamiltonian of one exponential: `Σ_j w_j H(ξ, ε(node_j))`.
fn stage_hamiltonian(
    model: &dyn HamiltonianModel,
    xi: &SystemParameters,
    controls: &StepControls,
    step: usize,
    weights: &[f64],
) -> Result<CMatrix> {
    let mut h = linalg::zeros(model.dimension());
    for (node, &w) in weights.iter().enumerate() {
        let hn = model.evaluate(xi, controls.node(step, node));
        h += hn * num_complex::Complex64::new(w, 0.0);
    }
    if !linalg::is_finite(&h) {
        return Err(Error::NonFinite(format!("Hamiltonian at step {step}")));
    }
    Ok(h)
}

/// Solves `i dU/dt = H(ξ, ε(t)) U`, `U(0) = 1`.
pub fn propagate_forward(
    model: &dyn HamiltonianModel,
    xi: &SystemParameters,
    controls: &StepControls,
) -> Result<EvolutionTrajectory> {
    propagate_forward_from(model, xi, controls, linalg::identity(model.dimension()))
}

/// As [`propagate_forward`] but starting from an arbitrary `U(t_0)`.
pub fn propagate_forward_from(
    model: &dyn HamiltonianModel,
    xi: &SystemParameters,
    controls: &StepControls,
    initial: CMatrix,
) -> Result<EvolutionTrajectory> {
    check_model(model, controls)?;
    let d = model.dimension();
    if initial.nrows() != d || initial.ncols() != d {
        return Err(Error::DimensionMismatch("initial operator".into()));
    }
    let hermitian = model.is_hermitian();
    let stages = controls.scheme.stages();
    let n = controls.n_steps();
    let mut operators = Vec::with_capacity(n + 1);
    let mut factors = Vec::with_capacity(n * stages.len());
    let mut u = initial;
    operators.push(u.clone());
    for step in 0..n {
        let dt = controls.time_grid[step + 1] - controls.time_grid[step];
        for weights in stages {
            let h = stage_hamiltonian(model, xi, controls, step, weights)?;
            let factor = if hermitian {
                StepExponential::hermitian(&h, dt)
            } else {
                StepExponential::general(&h, dt)
            };
            u = factor.propagator() * u;
            factors.push(factor);
        }
        operators.push(u.clone());
    }
    Ok(EvolutionTrajectory {
        time_grid: controls.time_grid.clone(),
        operators,
        hermitian,
        scheme: controls.scheme,
        factors,
    })
}

/// Solves `i dΛ/dt = H† Λ` backwards from `Λ(T) = boundary`.
pub fn propagate_adjoint(
    model: &dyn HamiltonianModel,
    xi: &SystemParameters,
    controls: &StepControls,
    boundary: &CMatrix,
) -> Result<AdjointTrajectory> {
    propagate_forward(model, xi, controls)?.adjoint(boundary)
}

/// `∂J/∂ε_c(node)` for every quadrature node of every step.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSensitivity {
    pub node_times: Vec<f64>,
    pub n_channels: usize,
    pub nodes_per_step: usize,
    /// Flat, same layout as [`StepControls::node_values`].
    pub values: Vec<f64>,
}

impl NodeSensitivity {
    pub fn node(&self, step: usize, node: usize) -> &[f64] {
        let k = (step * self.nodes_per_step + node) * self.n_channels;
        &self.values[k..k + self.n_channels]
    }
}

/// Sensitivity of `2·Re tr(Λ(T)† δU(T))` to the control value at each node.
///
/// For each step factor `E = exp(−i·dt·H_s)` this is
/// `2·Re tr(Λ_after† · L_E(∂H_s/∂ε) · U_before)`, which tends to
/// `2·dt·Im tr(Λ† ∂H/∂ε U)` weighted by the node weight as `dt → 0`.
pub fn gradient_integrand(
    model: &dyn HamiltonianModel,
    xi: &SystemParameters,
    controls: &StepControls,
    forward: &EvolutionTrajectory,
    adjoint: &AdjointTrajectory,
) -> Result<NodeSensitivity> {
    check_model(model, controls)?;
    if forward.time_grid != controls.time_grid || adjoint.time_grid != controls.time_grid {
        return Err(Error::GridMismatch(
            "forward, adjoint and controls must share one grid".into(),
        ));
    }
    if forward.scheme != controls.scheme {
        return Err(Error::GridMismatch("trajectory was built with another scheme".into()));
    }
    let m = controls.n_channels;
    let npn = controls.nodes_per_step();
    let stages = controls.scheme.stages();
    let mut values = vec![0.0; controls.node_times.len() * m];
    let mut stage_states: Vec<CMatrix> = Vec::with_capacity(stages.len());
    let mut derivatives: Vec<Vec<CMatrix>> = Vec::with_capacity(npn);
    for step in 0..controls.n_steps() {
        let factors = forward.stage_factors(step);
        stage_states.clear();
        stage_states.push(forward.operators[step].clone());
        for factor in &factors[..factors.len() - 1] {
            let next = factor.propagator() * stage_states.last().unwrap();
            stage_states.push(next);
        }
        derivatives.clear();
        for node in 0..npn {
            derivatives.push(model.control_derivatives(xi, controls.node(step, node)));
        }
        let mut lambda = adjoint.operators[step + 1].clone();
        for (s, factor) in factors.iter().enumerate().rev() {
            let kernel = factor.kernel(&stage_states[s], &lambda);
            for (node, &w) in stages[s].iter().enumerate() {
                let base = (step * npn + node) * m;
                for (c, dh) in derivatives[node].iter().enumerate() {
                    let overlap = factor.frechet_overlap(&kernel, dh);
                    values[base + c] += 2.0 * w * overlap.re;
                }
            }
            lambda = factor.propagator().adjoint() * lambda;
        }
    }
    Ok(NodeSensitivity {
        node_times: controls.node_times.clone(),
        n_channels: m,
        nodes_per_step: npn,
        values,
    })
}

/// `‖U_N(T) − U_{2N}(T)‖_max` for a continuous control source.
pub fn step_doubling_error(
    model: &dyn HamiltonianModel,
    xi: &SystemParameters,
    source: &dyn ControlSource,
    n_steps: usize,
    scheme: Scheme,
) -> Result<f64> {
    let coarse = StepControls::from_source(source, n_steps, scheme)?;
    let fine = StepControls::from_source(source, 2 * n_steps, scheme)?;
    let a = propagate_forward(model, xi, &coarse)?;
    let b = propagate_forward(model, xi, &fine)?;
    Ok(linalg::max_abs_diff(a.final_operator(), b.final_operator()))
}

/// Doubles the step count from `n_steps` until the step-doubling error is at
/// most `tolerance` or `max_steps` is exceeded. Returns the accepted step count
/// and its error.
pub fn converged_steps(
    model: &dyn HamiltonianModel,
    xi: &SystemParameters,
    source: &dyn ControlSource,
    n_steps: usize,
    scheme: Scheme,
    tolerance: f64,
    max_steps: usize,
) -> Result<(usize, f64)> {
    let mut n = n_steps.max(1);
    loop {
        let err = step_doubling_error(model, xi, source, n, scheme)?;
        if err <= tolerance || 2 * n > max_steps {
            return Ok((n, err));
        }
        n *= 2;
    }
}
