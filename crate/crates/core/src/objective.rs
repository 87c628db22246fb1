//! Gate-fidelity measures, the terminal cost `φ = 1 − T²`, its adjoint
//! boundary conditions and the assembled coefficient gradient for one system
//! parameter point.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::control::{synthesize, FourierParametrization, SynthesisJacobian};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::optim::{self, Bounds, LbfgsbOptions};
use crate::propagator::{gradient_integrand, propagate_forward, EvolutionTrajectory, Scheme, StepControls};
use crate::system::{HamiltonianModel, SystemParameters, TargetGate};

const WORST_CASE_STARTS: usize = 16;
const WORST_CASE_SEED: u64 = 0xF1DE;

/// `O = U₀† U|_Q`, the gate error restricted to the qubit subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitRestriction {
    pub matrix: CMatrix,
}

impl QubitRestriction {
    pub fn new(target: &TargetGate, u_final: &CMatrix, qubit_indices: &[usize]) -> Result<Self> {
        let n = target.dimension();
        if qubit_indices.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "target is {n}x{n} but {} qubit indices were given",
                qubit_indices.len()
            )));
        }
        if let Some(&bad) = qubit_indices.iter().find(|&&i| i >= u_final.nrows()) {
            return Err(Error::DimensionMismatch(format!(
                "qubit index {bad} outside a {}-dimensional operator",
                u_final.nrows()
            )));
        }
        let block = CMatrix::from_fn(n, n, |r, c| u_final[(qubit_indices[r], qubit_indices[c])]);
        Ok(QubitRestriction {
            matrix: target.matrix().adjoint() * block,
        })
    }

    pub fn from_matrix(matrix: CMatrix) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols());
        QubitRestriction { matrix }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace_fidelity(&self) -> f64 {
        self.matrix.trace().norm() / self.n() as f64
    }

    pub fn worst_case(&self) -> WorstCase {
        minimize_overlap(&self.matrix)
    }
}

/// Minimizer of `|⟨ψ|O|ψ⟩|` over unit states.
#[derive(Debug, Clone)]
pub struct WorstCase {
    pub fidelity: f64,
    pub state: DVector<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub trace_fidelity: f64,
    pub worst_case_fidelity: f64,
    /// `n(1 − T) − (1 − F)`, non-negative up to roundoff.
    pub bound_gap: f64,
}

impl FidelityReport {
    pub fn new(target: &TargetGate, u_final: &CMatrix, qubit_indices: &[usize]) -> Result<Self> {
        Ok(Self::from_restriction(&QubitRestriction::new(target, u_final, qubit_indices)?))
    }

    pub fn from_restriction(o: &QubitRestriction) -> Self {
        let t = o.trace_fidelity();
        let f = o.worst_case().fidelity;
        FidelityReport {
            trace_fidelity: t,
            worst_case_fidelity: f,
            bound_gap: o.n() as f64 * (1.0 - t) - (1.0 - f),
        }
    }
}

/// `T = (1/n)|tr(U₀† U|_Q)|`.
pub fn trace_fidelity(target: &TargetGate, u_final: &CMatrix, qubit_indices: &[usize]) -> Result<f64> {
    Ok(QubitRestriction::new(target, u_final, qubit_indices)?.trace_fidelity())
}

/// `F = min_ψ |⟨ψ|O|ψ⟩|` over unit `ψ` in the qubit subspace.
pub fn worst_case_fidelity(
    target: &TargetGate,
    u_final: &CMatrix,
    qubit_indices: &[usize],
) -> Result<f64> {
    Ok(QubitRestriction::new(target, u_final, qubit_indices)?.worst_case().fidelity)
}

/// `1 − F ≤ n(1 − T)`, with `1e-9` slack.
pub fn check_bound(report: &FidelityReport, n: usize) -> bool {
    1.0 - report.worst_case_fidelity <= n as f64 * (1.0 - report.trace_fidelity) + 1e-9
}

/// `φ = 1 − T²`.
pub fn terminal_cost(target: &TargetGate, u_final: &CMatrix, qubit_indices: &[usize]) -> Result<f64> {
    let t = trace_fidelity(target, u_final, qubit_indices)?;
    Ok(1.0 - t * t)
}

/// `Λ(T) = −(1/n²) tr(U₀† U|_Q) U₀`, embedded in the qubit block.
pub fn adjoint_boundary(
    target: &TargetGate,
    u_final: &CMatrix,
    qubit_indices: &[usize],
) -> Result<CMatrix> {
    let o = QubitRestriction::new(target, u_final, qubit_indices)?;
    let n = o.n() as f64;
    let scale = -o.matrix.trace() / (n * n);
    Ok(target.embed(u_final.nrows(), qubit_indices) * scale)
}

/// Standard boundary with the component along each column of `U(T)` removed,
/// `λ_k ← λ_k − Re(x_k† λ_k) x_k / |x_k|²`. Leaves the gradient unchanged for
/// Hermitian models and minimizes every column norm.
pub fn optimized_adjoint_boundary(
    target: &TargetGate,
    forward: &EvolutionTrajectory,
    qubit_indices: &[usize],
) -> Result<CMatrix> {
    if !forward.hermitian {
        return Err(Error::NonHermitian);
    }
    let u = forward.final_operator();
    let mut lambda = adjoint_boundary(target, u, qubit_indices)?;
    for k in 0..u.ncols() {
        let x = u.column(k);
        let norm2 = x.norm_squared();
        if norm2 == 0.0 {
            continue;
        }
        let alpha = x.dotc(&lambda.column(k)).re / norm2;
        let mut col = lambda.column_mut(k);
        col.axpy(Complex64::new(-alpha, 0.0), &x, Complex64::new(1.0, 0.0));
    }
    Ok(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyForm {
    #[default]
    None,
    /// `l = λ Σ_c ε_c(t)²`.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub weight: f64,
    pub form: PenaltyForm,
}

impl PenaltySpec {
    pub fn none() -> Self {
        PenaltySpec::default()
    }

    pub fn quadratic(weight: f64) -> Self {
        PenaltySpec {
            weight,
            form: PenaltyForm::Quadratic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.weight.is_finite() || self.weight < 0.0 {
            return Err(Error::invalid("penalty.weight", "must be finite and >= 0"));
        }
        Ok(())
    }

    fn is_active(&self) -> bool {
        self.form == PenaltyForm::Quadratic && self.weight > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    Standard,
    Optimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSettings {
    pub n_steps: usize,
    pub scheme: Scheme,
    pub boundary: BoundaryKind,
}

impl ObjectiveSettings {
    pub fn new(n_steps: usize) -> Self {
        ObjectiveSettings {
            n_steps,
            scheme: Scheme::default(),
            boundary: BoundaryKind::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    /// `φ + ∫ l dt`.
    pub value: f64,
    pub terminal: f64,
    pub penalty: f64,
    pub gradient: Vec<f64>,
}

/// Everything about one coefficient vector that does not depend on the system
/// parameters: node controls, their Jacobian and the penalty.
#[derive(Debug, Clone)]
pub struct PreparedControls {
    pub controls: StepControls,
    jacobian: SynthesisJacobian,
    boundary: BoundaryKind,
    penalty: f64,
    penalty_gradient: Vec<f64>,
}

impl PreparedControls {
    pub fn new(
        params: &FourierParametrization,
        penalty: &PenaltySpec,
        settings: &ObjectiveSettings,
    ) -> Result<Self> {
        params.validate()?;
        penalty.validate()?;
        let controls = StepControls::from_source(params, settings.n_steps, settings.scheme)?;
        let jacobian = SynthesisJacobian::at_times(params, &controls.node_times);
        let (value, gradient) = if penalty.is_active() {
            quadratic_penalty(params, penalty.weight, settings.n_steps)?
        } else {
            (0.0, vec![0.0; params.n_coefficients()])
        };
        Ok(PreparedControls {
            controls,
            jacobian,
            boundary: settings.boundary,
            penalty: value,
            penalty_gradient: gradient,
        })
    }

    pub fn evaluate(
        &self,
        model: &dyn HamiltonianModel,
        xi: &SystemParameters,
        target: &TargetGate,
    ) -> Result<ObjectiveValue> {
        let idx = model.qubit_indices();
        let forward = propagate_forward(model, xi, &self.controls)?;
        let u = forward.final_operator();
        let terminal = terminal_cost(target, u, idx)?;
        let boundary = match self.boundary {
            BoundaryKind::Standard => adjoint_boundary(target, u, idx)?,
            BoundaryKind::Optimized => optimized_adjoint_boundary(target, &forward, idx)?,
        };
        let adjoint = forward.adjoint(&boundary)?;
        let sens = gradient_integrand(model, xi, &self.controls, &forward, &adjoint)?;
        let mut gradient = self.jacobian.transpose_apply(&sens.values);
        for (g, p) in gradient.iter_mut().zip(&self.penalty_gradient) {
            *g += p;
        }
        if !terminal.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("objective".into()));
        }
        Ok(ObjectiveValue {
            value: terminal + self.penalty,
            terminal,
            penalty: self.penalty,
            gradient,
        })
    }

    /// Final operator only, without the adjoint pass.
    pub fn final_operator(&self, model: &dyn HamiltonianModel, xi: &SystemParameters) -> Result<CMatrix> {
        Ok(propagate_forward(model, xi, &self.controls)?.final_operator().clone())
    }
}

/// `J = φ(U(T)) + ∫ l dt` and `∂J/∂coefficients`.
pub fn objective_and_gradient(
    model: &dyn HamiltonianModel,
    xi: &SystemParameters,
    target: &TargetGate,
    params: &FourierParametrization,
    penalty: &PenaltySpec,
    settings: &ObjectiveSettings,
) -> Result<ObjectiveValue> {
    PreparedControls::new(params, penalty, settings)?.evaluate(model, xi, target)
}

/// Trapezoidal `λ ∫ Σ_c ε_c² dt` on the uniform grid and its coefficient gradient.
fn quadratic_penalty(
    params: &FourierParametrization,
    weight: f64,
    n_steps: usize,
) -> Result<(f64, Vec<f64>)> {
    let waveform = synthesize(params, n_steps)?;
    let grid = &waveform.time_grid;
    let m = waveform.n_channels();
    let mut value = 0.0;
    let mut sens = vec![0.0; grid.len() * m];
    for (i, sample) in waveform.samples.iter().enumerate() {
        let left = if i > 0 { grid[i] - grid[i - 1] } else { 0.0 };
        let right = if i + 1 < grid.len() { grid[i + 1] - grid[i] } else { 0.0 };
        let w = 0.5 * (left + right);
        for (c, &e) in sample.iter().enumerate() {
            value += weight * w * e * e;
            sens[i * m + c] = 2.0 * weight * w * e;
        }
    }
    let jac = SynthesisJacobian::at_times(params, grid);
    Ok((value, jac.transpose_apply(&sens)))
}

/// Packs `x ∈ Cⁿ` with `x₀` real into `2n − 1` reals.
fn unpack(p: &[f64], n: usize) -> DVector<Complex64> {
    DVector::from_fn(n, |k, _| {
        if k == 0 {
            Complex64::new(p[0], 0.0)
        } else {
            Complex64::new(p[2 * k - 1], p[2 * k])
        }
    })
}

/// `f(x) = |x†Ox|² / |x|⁴` and its gradient in packed coordinates.
fn overlap_cost(o: &CMatrix, p: &[f64]) -> (f64, Vec<f64>) {
    let n = o.nrows();
    let x = unpack(p, n);
    let ox = o * &x;
    let ohx = o.adjoint() * &x;
    let s = x.norm_squared();
    let w = x.dotc(&ox);
    let w2 = w.norm_sqr();
    let f = w2 / (s * s);
    // Wirtinger derivative ∂f/∂x̄.
    let dz = (ox * w.conj() + ohx * w) * Complex64::new(1.0 / (s * s), 0.0)
        - x * Complex64::new(2.0 * w2 / (s * s * s), 0.0);
    let mut g = vec![0.0; 2 * n - 1];
    g[0] = 2.0 * dz[0].re;
    for k in 1..n {
        g[2 * k - 1] = 2.0 * dz[k].re;
        g[2 * k] = 2.0 * dz[k].im;
    }
    (f, g)
}

fn minimize_overlap(o: &CMatrix) -> WorstCase {
    let n = o.nrows();
    if n == 1 {
        return WorstCase {
            fidelity: o[(0, 0)].norm(),
            state: DVector::from_element(1, Complex64::new(1.0, 0.0)),
        };
    }
    let dim = 2 * n - 1;
    let options = LbfgsbOptions {
        memory: dim.max(5),
        max_iters: 500,
        grad_tol: 1e-30,
        step_tol: 1e-14,
        f_rel_tol: 0.0,
    };
    let bounds = Bounds::unbounded(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(WORST_CASE_SEED);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..WORST_CASE_STARTS {
        let x0: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let result = optim::minimize(
            |p: &[f64]| -> std::result::Result<(f64, Vec<f64>), std::convert::Infallible> {
                Ok(overlap_cost(o, p))
            },
            x0,
            &bounds,
            &options,
            |_, _| {},
        );
        let Ok(result) = result;
        if result.f.is_finite() && best.as_ref().map_or(true, |(f, _)| result.f < *f) {
            best = Some((result.f, result.x));
        }
    }
    let (_, p) = best.expect("at least one start");
    let mut state = unpack(&p, n);
    let norm = state.norm();
    state /= Complex64::new(norm, 0.0);
    let fidelity = state.dotc(&(o * &state)).norm().min(1.0);
    WorstCase { fidelity, state }
}
