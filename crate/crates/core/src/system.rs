//! Hamiltonian models and target gates.
//!
//! Units: ħ = 1 and the maximal resonant Rabi frequency Ω₀ = 1, so times are in
//! units of 1/Ω₀. Basis order for the rare-earth ion model is `(|0⟩, |1⟩, |e⟩)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// The uncontrollable parameters ξ = (γ, δ) of one ensemble member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParameters {
    /// Relative field strength.
    pub gamma: f64,
    /// Inhomogeneous shift of the excited state, in units of Ω₀.
    pub delta: f64,
}

impl SystemParameters {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        if !gamma.is_finite() || !delta.is_finite() {
            return Err(Error::NonFinite("system parameters".into()));
        }
        if gamma < 0.0 {
            return Err(Error::invalid("gamma", "must be >= 0"));
        }
        Ok(SystemParameters { gamma, delta })
    }

    /// The ideal ion, γ = 1 and δ = 0.
    pub fn ideal() -> Self {
        SystemParameters {
            gamma: 1.0,
            delta: 0.0,
        }
    }
}

/// `H(ξ, ε)` together with its control derivatives.
pub trait HamiltonianModel: Sync {
    fn dimension(&self) -> usize;

    /// Indices of the computational subspace within the full basis.
    fn qubit_indices(&self) -> &[usize];

    fn n_controls(&self) -> usize;

    fn evaluate(&self, xi: &SystemParameters, controls: &[f64]) -> CMatrix;

    /// `∂H/∂ε_c` for every channel at the given control value.
    fn control_derivatives(&self, xi: &SystemParameters, controls: &[f64]) -> Vec<CMatrix>;

    /// Whether `evaluate` is Hermitian for every input.
    fn is_hermitian(&self) -> bool;
}

/// Single rare-earth ion: two ground levels coupled optically to a shared
/// excited state,
///
/// `H = −δ|e⟩⟨e| + (γ/2) Σ_{i=0,1} (Ω_i |e⟩⟨i| + h.c.) − (i/2) Γ |e⟩⟨e|`,
///
/// with `Ω_i = ε_{2i} + i ε_{2i+1}`. `Γ = 0` by default; a positive decay rate
/// makes the model lossy.
#[derive(Debug, Clone, PartialEq)]
pub struct ReqcModel {
    pub decay_rate: f64,
}

const REQC_QUBITS: [usize; 2] = [0, 1];
const EXCITED: usize = 2;

impl ReqcModel {
    pub fn new() -> Self {
        ReqcModel { decay_rate: 0.0 }
    }

    pub fn with_decay(decay_rate: f64) -> Result<Self> {
        if !(decay_rate.is_finite() && decay_rate >= 0.0) {
            return Err(Error::invalid("decay_rate", "must be finite and >= 0"));
        }
        Ok(ReqcModel { decay_rate })
    }
}

impl Default for ReqcModel {
    fn default() -> Self {
        ReqcModel::new()
    }
}

/// `reqc_model()` with no decay.
pub fn reqc_model() -> ReqcModel {
    ReqcModel::new()
}

impl HamiltonianModel for ReqcModel {
    fn dimension(&self) -> usize {
        3
    }

    fn qubit_indices(&self) -> &[usize] {
        &REQC_QUBITS
    }

    fn n_controls(&self) -> usize {
        4
    }

    fn evaluate(&self, xi: &SystemParameters, controls: &[f64]) -> CMatrix {
        let mut h = linalg::zeros(3);
        h[(EXCITED, EXCITED)] = Complex64::new(-xi.delta, -0.5 * self.decay_rate);
        for ground in 0..2 {
            let rabi = Complex64::new(controls[2 * ground], controls[2 * ground + 1]);
            let coupling = rabi * (0.5 * xi.gamma);
            h[(EXCITED, ground)] = coupling;
            h[(ground, EXCITED)] = coupling.conj();
        }
        h
    }

    fn control_derivatives(&self, xi: &SystemParameters, _controls: &[f64]) -> Vec<CMatrix> {
        let half = 0.5 * xi.gamma;
        let mut out = Vec::with_capacity(4);
        for ground in 0..2 {
            for quadrature in [Complex64::new(half, 0.0), Complex64::new(0.0, half)] {
                let mut d = linalg::zeros(3);
                d[(EXCITED, ground)] = quadrature;
                d[(ground, EXCITED)] = quadrature.conj();
                out.push(d);
            }
        }
        out
    }

    fn is_hermitian(&self) -> bool {
        self.decay_rate == 0.0
    }
}

/// A driven two-level system, `H = (δ/2)σ_z + (γ/2)(ε₀σ_x + ε₁σ_y)`, with both
/// levels forming the qubit. Cheap enough for tests and CLI smoke runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StubModel;

const STUB_QUBITS: [usize; 2] = [0, 1];

impl HamiltonianModel for StubModel {
    fn dimension(&self) -> usize {
        2
    }

    fn qubit_indices(&self) -> &[usize] {
        &STUB_QUBITS
    }

    fn n_controls(&self) -> usize {
        2
    }

    fn evaluate(&self, xi: &SystemParameters, controls: &[f64]) -> CMatrix {
        let mut h = linalg::zeros(2);
        h[(0, 0)] = Complex64::new(0.5 * xi.delta, 0.0);
        h[(1, 1)] = Complex64::new(-0.5 * xi.delta, 0.0);
        let off = Complex64::new(controls[0], -controls[1]) * (0.5 * xi.gamma);
        h[(0, 1)] = off;
        h[(1, 0)] = off.conj();
        h
    }

    fn control_derivatives(&self, xi: &SystemParameters, _controls: &[f64]) -> Vec<CMatrix> {
        let half = 0.5 * xi.gamma;
        let mut dx = linalg::zeros(2);
        dx[(0, 1)] = Complex64::new(half, 0.0);
        dx[(1, 0)] = Complex64::new(half, 0.0);
        let mut dy = linalg::zeros(2);
        dy[(0, 1)] = Complex64::new(0.0, -half);
        dy[(1, 0)] = Complex64::new(0.0, half);
        vec![dx, dy]
    }

    fn is_hermitian(&self) -> bool {
        true
    }
}

/// Desired evolution on the qubit subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetGate {
    matrix: CMatrix,
}

impl TargetGate {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch("target gate must be square".into()));
        }
        if !linalg::is_finite(&matrix) {
            return Err(Error::NonFinite("target gate".into()));
        }
        if linalg::unitarity_defect(&matrix) > 1e-12 {
            return Err(Error::invalid("target gate", "matrix is not unitary"));
        }
        Ok(TargetGate { matrix })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    /// Embeds the gate into the full space, zero outside the qubit block.
    pub fn embed(&self, dimension: usize, qubit_indices: &[usize]) -> CMatrix {
        let mut out = linalg::zeros(dimension);
        for (a, &i) in qubit_indices.iter().enumerate() {
            for (b, &j) in qubit_indices.iter().enumerate() {
                out[(i, j)] = self.matrix[(a, b)];
            }
        }
        out
    }
}

/// `U₀ = |1⟩⟨1| − |0⟩⟨0|`.
pub fn phase_gate_target() -> TargetGate {
    let mut m = linalg::identity(2);
    m[(0, 0)] = Complex64::new(-1.0, 0.0);
    TargetGate { matrix: m }
}

pub fn identity_target(n: usize) -> Result<TargetGate> {
    if n == 0 {
        return Err(Error::invalid("n", "must be >= 1"));
    }
    Ok(TargetGate {
        matrix: linalg::identity(n),
    })
}
