//! Randomized self-checks: adjoint gradient against finite differences,
//! unitarity of the propagator, the `1 − F ≤ n(1 − T)` bound and equality of
//! the gradients from both adjoint boundaries.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::FourierParametrization;
use crate::error::Result;
use crate::linalg::{self, CMatrix};
use crate::objective::{
    objective_and_gradient, BoundaryKind, FidelityReport, ObjectiveSettings, PenaltySpec,
    QubitRestriction,
};
use crate::propagator::{propagate_forward, StepControls};
use crate::system::{phase_gate_target, reqc_model, SystemParameters};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seed: u64,
    pub gradient_problems: usize,
    pub boundary_problems: usize,
    pub bound_samples: usize,
    pub n_steps: usize,
    pub max_harmonics: usize,
    /// Negates the adjoint gradient; the gradient suite must then fail.
    pub inject_sign_flip: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            seed: 0x5EED,
            gradient_problems: 20,
            boundary_problems: 20,
            bound_samples: 10_000,
            n_steps: 64,
            max_harmonics: 8,
            inject_sign_flip: false,
        }
    }
}

/// Enough to replay one failing case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailingCase {
    pub suite: String,
    pub seed: u64,
    pub case: usize,
    pub error: f64,
    pub detail: String,
    pub xi: Option<SystemParameters>,
    pub params: Option<FourierParametrization>,
    /// Row-major `[re, im]` entries of the offending matrix.
    pub matrix: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub failure: Option<FailingCase>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    fn new(name: &str, tolerance: f64) -> Self {
        SuiteOutcome {
            name: name.into(),
            cases: 0,
            max_error: 0.0,
            tolerance,
            failure: None,
        }
    }

    fn record(&mut self, error: f64, failure: impl FnOnce() -> FailingCase) {
        self.cases += 1;
        if error > self.max_error || error.is_nan() {
            self.max_error = if error.is_nan() { f64::INFINITY } else { error };
        }
        if self.failure.is_none() && !(error <= self.tolerance) {
            self.failure = Some(failure());
        }
    }
}

pub fn random_unitary(n: usize, rng: &mut impl Rng) -> CMatrix {
    let z = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = z.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = DVector::from_fn(n, |k, _| {
        let d = r[(k, k)];
        if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        }
    });
    q * CMatrix::from_diagonal(&phases)
}

/// A random REQC problem with `1..=max_harmonics` harmonics.
pub fn random_problem(rng: &mut impl Rng, max_harmonics: usize) -> (SystemParameters, FourierParametrization) {
    let k = rng.gen_range(1..=max_harmonics.max(1));
    let duration = rng.gen_range(2.0..10.0);
    let mut params = FourierParametrization::zeros(4, k, duration, 2.0).expect("valid shape");
    let scale = 0.8 / (1.0 + k as f64).sqrt();
    for v in params.coefficients.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = scale * z;
    }
    let xi = SystemParameters {
        gamma: rng.gen_range(0.8..1.2),
        delta: rng.gen_range(-2.0..2.0),
    };
    (xi, params)
}

fn flatten(m: &CMatrix) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push([m[(r, c)].re, m[(r, c)].im]);
        }
    }
    out
}

/// Largest per-coefficient error `|g − fd| / max(|fd|, 1e-3‖fd‖_∞)` against a
/// fourth-order central difference with step `1e-3`.
pub fn gradient_suite(options: &CheckOptions) -> Result<SuiteOutcome> {
    let mut outcome = SuiteOutcome::new("gradient", 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let model = reqc_model();
    let target = phase_gate_target();
    let settings = ObjectiveSettings::new(options.n_steps);
    let penalty = PenaltySpec::none();
    for case in 0..options.gradient_problems {
        let (xi, params) = random_problem(&mut rng, options.max_harmonics);
        let mut gradient = objective_and_gradient(&model, &xi, &target, &params, &penalty, &settings)?.gradient;
        if options.inject_sign_flip {
            gradient.iter_mut().for_each(|g| *g = -*g);
        }
        let h = 1e-3;
        let at = |k: usize, dx: f64| -> Result<f64> {
            let mut x = params.coefficients.clone();
            x[k] += dx;
            Ok(objective_and_gradient(&model, &xi, &target, &params.with_coefficients(x), &penalty, &settings)?.value)
        };
        let mut fd = Vec::with_capacity(gradient.len());
        for k in 0..gradient.len() {
            fd.push((8.0 * (at(k, h)? - at(k, -h)?) - (at(k, 2.0 * h)? - at(k, -2.0 * h)?)) / (12.0 * h));
        }
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (1e-3 * scale).max(1e-12);
        let (worst, k) = gradient
            .iter()
            .zip(&fd)
            .enumerate()
            .map(|(k, (g, f))| ((g - f).abs() / f.abs().max(floor), k))
            .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
        outcome.record(worst, || FailingCase {
            suite: "gradient".into(),
            seed: options.seed,
            case,
            error: worst,
            detail: format!("coefficient {k}: adjoint {} vs finite difference {}", gradient[k], fd[k]),
            xi: Some(xi),
            params: Some(params.clone()),
            matrix: None,
        });
    }
    Ok(outcome)
}

/// `‖U†U − 1‖_max` at the final time of random problems.
pub fn unitarity_suite(options: &CheckOptions) -> Result<SuiteOutcome> {
    let mut outcome = SuiteOutcome::new("unitarity", 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x1);
    let model = reqc_model();
    for case in 0..options.gradient_problems {
        let (xi, params) = random_problem(&mut rng, options.max_harmonics);
        let controls = StepControls::from_source(&params, options.n_steps * 4, Default::default())?;
        let u = propagate_forward(&model, &xi, &controls)?.final_operator().clone();
        let err = linalg::unitarity_defect(&u);
        outcome.record(err, || FailingCase {
            suite: "unitarity".into(),
            seed: options.seed,
            case,
            error: err,
            detail: "U(T) is not unitary".into(),
            xi: Some(xi),
            params: Some(params.clone()),
            matrix: Some(flatten(&u)),
        });
    }
    Ok(outcome)
}

/// Violation `max(0, (1 − F) − n(1 − T))` over random unitary restrictions with
/// `n ∈ {2, 3, 4}`, one third of the samples each.
pub fn bound_suite(options: &CheckOptions) -> Result<SuiteOutcome> {
    let mut outcome = SuiteOutcome::new("bound", 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x2);
    for case in 0..options.bound_samples {
        let n = 2 + case % 3;
        let extra = rng.gen_range(0..=2);
        let u = random_unitary(n + extra, &mut rng);
        let o = QubitRestriction::from_matrix(u.view((0, 0), (n, n)).into_owned());
        let report = FidelityReport::from_restriction(&o);
        let violation = (-report.bound_gap).max(0.0);
        outcome.record(violation, || FailingCase {
            suite: "bound".into(),
            seed: options.seed,
            case,
            error: violation,
            detail: format!("n = {n}: {report:?}"),
            xi: None,
            params: None,
            matrix: Some(flatten(&o.matrix)),
        });
    }
    Ok(outcome)
}

/// Relative difference between the gradients from the standard and the
/// norm-minimized adjoint boundary.
pub fn boundary_suite(options: &CheckOptions) -> Result<SuiteOutcome> {
    let mut outcome = SuiteOutcome::new("boundary", 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x3);
    let model = reqc_model();
    let target = phase_gate_target();
    for case in 0..options.boundary_problems {
        let (xi, params) = random_problem(&mut rng, options.max_harmonics);
        let mut settings = ObjectiveSettings::new(options.n_steps);
        let a = objective_and_gradient(&model, &xi, &target, &params, &PenaltySpec::none(), &settings)?;
        settings.boundary = BoundaryKind::Optimized;
        let b = objective_and_gradient(&model, &xi, &target, &params, &PenaltySpec::none(), &settings)?;
        let scale = a.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-300);
        let err = a
            .gradient
            .iter()
            .zip(&b.gradient)
            .map(|(x, y)| (x - y).abs() / scale)
            .fold(0.0, f64::max);
        outcome.record(err, || FailingCase {
            suite: "boundary".into(),
            seed: options.seed,
            case,
            error: err,
            detail: "gradients from the two boundaries differ".into(),
            xi: Some(xi),
            params: Some(params.clone()),
            matrix: None,
        });
    }
    Ok(outcome)
}

pub fn run_all(options: &CheckOptions) -> Result<Vec<SuiteOutcome>> {
    Ok(vec![
        gradient_suite(options)?,
        unitarity_suite(options)?,
        bound_suite(options)?,
        boundary_suite(options)?,
    ])
}
