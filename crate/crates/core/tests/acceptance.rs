//! Acceptance gate. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails. Criterion 5 runs the full 49-point optimization and takes
//! several minutes in release mode.

use std::f64::consts::{PI, TAU};
use std::io::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pulseforge::baselines::naive_2pi_params;
use pulseforge::control::{synthesize, max_amplitude_violation, FourierParametrization, FourierTerm};
use pulseforge::minimax::{
    converged_grid_steps, default_reqc_grid, evaluate_grid, optimize, resonant_initial_guess,
    MinimaxOptions, ParameterGrid, TargetMap, DEFAULT_SEED,
};
use pulseforge::objective::{
    adjoint_boundary, objective_and_gradient, optimized_adjoint_boundary, BoundaryKind,
    ObjectiveSettings, PenaltySpec, QubitRestriction,
};
use pulseforge::propagator::{propagate_forward, Scheme, StepControls};
use pulseforge::system::{phase_gate_target, reqc_model, SystemParameters, TargetGate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type C = Complex64;
type CMat = DMatrix<C>;

struct Outcome {
    passed: bool,
    detail: String,
}

/// Written straight to stdout so the line shows up without `--nocapture`.
fn report(id: usize, name: &str, started: Instant, outcome: &Outcome) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "criterion {id} [{}] {name}: {} ({:.1} s)",
        if outcome.passed { "PASS" } else { "FAIL" },
        outcome.detail,
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------- oracles

fn haar_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    let z = CMat::from_fn(n, n, |_, _| {
        C::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let qr = z.qr();
    let (q, r) = (qr.q(), qr.r());
    let d = DVector::from_fn(n, |k, _| {
        let x = r[(k, k)];
        x / x.norm()
    });
    q * CMat::from_diagonal(&d)
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn unitarity_defect(u: &CMat) -> f64 {
    max_abs(&(u.adjoint() * u - CMat::identity(u.nrows(), u.ncols())))
}

/// Smallest eigenvalue of a Hermitian matrix through its real symmetric
/// embedding `[[A, −B], [B, A]]`.
fn lambda_min(h: &CMat) -> f64 {
    let n = h.nrows();
    let m = DMatrix::<f64>::from_fn(2 * n, 2 * n, |i, j| {
        let (a, b) = (h[(i % n, j % n)].re, h[(i % n, j % n)].im);
        match (i < n, j < n) {
            (true, true) | (false, false) => a,
            (true, false) => -b,
            (false, true) => b,
        }
    });
    m.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// `min_ψ |⟨ψ|O|ψ⟩|` as the distance from 0 to the (convex) numerical range:
/// `max(0, max_θ λ_min((e^{−iθ}O + e^{iθ}O†)/2))`.
fn numerical_range_distance(o: &CMat) -> f64 {
    let g = |theta: f64| {
        let e = C::from_polar(1.0, -theta);
        lambda_min(&((o * e + o.adjoint() * e.conj()) * C::new(0.5, 0.0)))
    };
    let m = 720;
    let (mut best, mut best_theta) = (f64::NEG_INFINITY, 0.0);
    for k in 0..m {
        let t = TAU * k as f64 / m as f64;
        let v = g(t);
        if v > best {
            best = v;
            best_theta = t;
        }
    }
    let (mut a, mut b) = (best_theta - TAU / m as f64, best_theta + TAU / m as f64);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if g(c) > g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(g(0.5 * (a + b))).max(0.0)
}

/// `min |⟨ψ|O|ψ⟩|` for `n = 2` by brute force over
/// `ψ = (cos a, e^{ib} sin a)`, followed by three zoom passes.
fn grid_oracle(o: &CMat) -> f64 {
    let f = |a: f64, b: f64| {
        let psi = [C::new(a.cos(), 0.0), C::from_polar(a.sin(), b)];
        let mut s = C::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                s += psi[i].conj() * o[(i, j)] * psi[j];
            }
        }
        s.norm()
    };
    let m = 400;
    let ha = PI / 2.0 / m as f64;
    let hb = 2.0 * PI / m as f64;
    let coarse: Vec<Vec<f64>> = (0..=m)
        .map(|i| (0..m).map(|j| f(i as f64 * ha, j as f64 * hb)).collect())
        .collect();
    let mut minima = Vec::new();
    for i in 0..=m {
        for j in 0..m {
            let v = coarse[i][j];
            let lower = (i.saturating_sub(1)..=(i + 1).min(m))
                .flat_map(|k| [j + m - 1, j, j + 1].map(|l| coarse[k][l % m]))
                .any(|w| w < v);
            if !lower {
                minima.push((v, i as f64 * ha, j as f64 * hb));
            }
        }
    }
    minima.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = f64::INFINITY;
    for &(v, a0, b0) in minima.iter().take(32) {
        let (mut ca, mut cb, mut va) = (a0, b0, v);
        let (mut da, mut db) = (2.0 * ha, 2.0 * hb);
        for _ in 0..14 {
            for i in -20..=20 {
                let a = (ca + da * i as f64 / 20.0).clamp(0.0, PI / 2.0);
                for j in -20..=20 {
                    let b = cb + db * j as f64 / 20.0;
                    let w = f(a, b);
                    if w < va {
                        va = w;
                        ca = a;
                        cb = b;
                    }
                }
            }
            da *= 0.2;
            db *= 0.2;
        }
        best = best.min(va);
    }
    best
}

fn trace_fidelity(o: &CMat) -> f64 {
    o.trace().norm() / o.nrows() as f64
}

fn restriction(target: &TargetGate, u: &CMat, idx: &[usize]) -> CMat {
    let t = target.matrix();
    CMat::from_fn(idx.len(), idx.len(), |i, j| {
        (0..idx.len()).map(|k| t[(k, i)].conj() * u[(idx[k], idx[j])]).sum()
    })
}

fn random_problem(rng: &mut ChaCha8Rng) -> (SystemParameters, FourierParametrization) {
    let k = rng.gen_range(1..=8);
    let mut p = FourierParametrization::zeros(4, k, rng.gen_range(1.0..8.0), 1.0).unwrap();
    for v in p.coefficients.iter_mut() {
        *v = rng.gen_range(-0.6..0.6) / (k as f64).sqrt();
    }
    let xi = SystemParameters::new(rng.gen_range(0.85..1.15), rng.gen_range(-1.5..1.5)).unwrap();
    (xi, p)
}

// ---------------------------------------------------------------- criteria

fn criterion_1() -> Outcome {
    let model = reqc_model();
    let target = phase_gate_target();
    let settings = ObjectiveSettings::new(64);
    let none = PenaltySpec::none();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut coefficients = 0;
    for _ in 0..20 {
        let (xi, p) = random_problem(&mut rng);
        let g = objective_and_gradient(&model, &xi, &target, &p, &none, &settings).unwrap().gradient;
        let j = |x: &[f64]| objective_and_gradient(&model, &xi, &target, &p.with_coefficients(x.to_vec()), &none, &settings).unwrap().value;
        let h = 1e-3;
        let fd: Vec<f64> = (0..g.len())
            .map(|k| {
                let at = |s: f64| {
                    let mut x = p.coefficients.clone();
                    x[k] += s * h;
                    j(&x)
                };
                (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * h)
            })
            .collect();
        let floor = 1e-3 * fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / b.abs().max(floor));
        }
        coefficients += g.len();
    }
    Outcome {
        passed: worst <= 1e-6,
        detail: format!("max relative error {worst:.2e} over {coefficients} coefficients (limit 1e-6)"),
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_violation = f64::NEG_INFINITY;
    for n in 2..=4 {
        for _ in 0..10_000 {
            let extra = rng.gen_range(0..=2);
            let u = haar_unitary(n + extra, &mut rng);
            let o = u.view((0, 0), (n, n)).into_owned();
            let f = QubitRestriction::from_matrix(o.clone()).worst_case().fidelity;
            let t = trace_fidelity(&o);
            worst_violation = worst_violation.max((1.0 - f) - n as f64 * (1.0 - t));
        }
    }

    // Equality family O = 1 − (1 − F₀)|ψ⟩⟨ψ|.
    let mut worst_equality = 0.0f64;
    for n in 2..=4 {
        for f0 in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let psi = haar_unitary(n, &mut rng).column(0).into_owned();
            let o = CMat::identity(n, n) - &psi * psi.adjoint() * C::new(1.0 - f0, 0.0);
            let f = QubitRestriction::from_matrix(o.clone()).worst_case().fidelity;
            let t = trace_fidelity(&o);
            worst_equality = worst_equality.max(((1.0 - f) - n as f64 * (1.0 - t)).abs());
        }
    }

    // Cross-validation of the worst-case minimizer.
    let mut worst_grid = 0.0f64;
    for _ in 0..100 {
        let extra = rng.gen_range(0..=1);
        let u = haar_unitary(2 + extra, &mut rng);
        let o = u.view((0, 0), (2, 2)).into_owned();
        let f = QubitRestriction::from_matrix(o.clone()).worst_case().fidelity;
        worst_grid = worst_grid.max((f - grid_oracle(&o)).abs());
    }
    let mut worst_range = 0.0f64;
    for n in 2..=4 {
        for _ in 0..100 {
            let u = haar_unitary(n + 1, &mut rng);
            let o = u.view((0, 0), (n, n)).into_owned();
            let f = QubitRestriction::from_matrix(o.clone()).worst_case().fidelity;
            worst_range = worst_range.max((f - numerical_range_distance(&o)).abs());
        }
    }
    Outcome {
        passed: worst_violation <= 1e-9 && worst_equality <= 1e-9 && worst_grid <= 1e-6 && worst_range <= 1e-9,
        detail: format!(
            "bound violation {worst_violation:.1e} over 3×10⁴ samples, equality family {worst_equality:.1e}, \
             F vs grid oracle {worst_grid:.1e}, F vs numerical-range oracle {worst_range:.1e}"
        ),
    }
}

fn criterion_3() -> Outcome {
    let model = reqc_model();
    let target = phase_gate_target();
    let none = PenaltySpec::none();
    let idx = [0usize, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_gradient = 0.0f64;
    let mut worst_growth = f64::NEG_INFINITY;
    for _ in 0..20 {
        let (xi, p) = random_problem(&mut rng);
        let mut settings = ObjectiveSettings::new(64);
        let a = objective_and_gradient(&model, &xi, &target, &p, &none, &settings).unwrap().gradient;
        settings.boundary = BoundaryKind::Optimized;
        let b = objective_and_gradient(&model, &xi, &target, &p, &none, &settings).unwrap().gradient;
        let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (x, y) in a.iter().zip(&b) {
            worst_gradient = worst_gradient.max((x - y).abs() / scale);
        }

        let controls = StepControls::from_source(&p, 64, Scheme::CommutatorFree4).unwrap();
        let fwd = propagate_forward(&model, &xi, &controls).unwrap();
        let standard = adjoint_boundary(&target, fwd.final_operator(), &idx).unwrap();
        let optimized = optimized_adjoint_boundary(&target, &fwd, &idx).unwrap();
        for k in 0..standard.ncols() {
            worst_growth = worst_growth.max(optimized.column(k).norm() - standard.column(k).norm());
        }
    }
    Outcome {
        passed: worst_gradient <= 1e-9 && worst_growth <= 1e-15,
        detail: format!(
            "max relative gradient difference {worst_gradient:.1e} (limit 1e-9), max column-norm change {worst_growth:+.1e}"
        ),
    }
}

fn criterion_4() -> Outcome {
    let model = reqc_model();
    let grid = ParameterGrid::new(vec![SystemParameters::ideal()], None).unwrap();
    let targets = TargetMap::reqc();
    let initial = resonant_initial_guess(24, 24.0 * PI, 1.0, 1e-3, DEFAULT_SEED).unwrap();
    let options = MinimaxOptions {
        p_schedule: vec![],
        ..MinimaxOptions::default()
    };
    let result = optimize(&model, &grid, &targets, &initial, &options).unwrap();
    // Re-evaluate the trace fidelity independently on a finer grid.
    let controls = StepControls::from_source(&result.coefficients, 4096, Scheme::CommutatorFree4).unwrap();
    let u = propagate_forward(&model, &SystemParameters::ideal(), &controls).unwrap();
    let t = trace_fidelity(&restriction(&phase_gate_target(), u.final_operator(), &[0, 1]));
    let j_fine = 1.0 - t * t;
    Outcome {
        passed: result.j_max <= 1e-8 && j_fine <= 1e-8,
        detail: format!(
            "J = {:.1e} at 512 steps, {j_fine:.1e} at 4096 steps ({:?})",
            result.j_max, result.termination
        ),
    }
}

struct RobustRun {
    params: FourierParametrization,
    steps: usize,
}

fn criterion_5() -> (Outcome, Option<RobustRun>) {
    let model = reqc_model();
    let grid = default_reqc_grid();
    let targets = TargetMap::reqc();
    let initial = resonant_initial_guess(24, 24.0 * PI, 1.0, 1e-3, DEFAULT_SEED).unwrap();
    let options = MinimaxOptions::default();
    let result = optimize(&model, &grid, &targets, &initial, &options).unwrap();
    let params = result.coefficients.clone();

    let (steps, _) =
        converged_grid_steps(&model, &grid, &params, 512, Scheme::CommutatorFree4, 1e-8, 65536).unwrap();
    let controls = StepControls::from_source(&params, steps, Scheme::CommutatorFree4).unwrap();
    let (mut near, mut far, mut cross) = (0.0f64, 0.0f64, 0.0f64);
    for xi in &grid.points {
        let u = propagate_forward(&model, xi, &controls).unwrap();
        let o = restriction(targets.target_for(xi), u.final_operator(), &[0, 1]);
        let f = QubitRestriction::from_matrix(o.clone()).worst_case().fidelity;
        cross = cross.max((f - numerical_range_distance(&o)).abs());
        if targets.is_far(xi) {
            far = far.max(1.0 - f);
        } else {
            near = near.max(1.0 - f);
        }
    }
    let fine = synthesize(&params, 8 * options.settings.n_steps).unwrap();
    let amplitude = max_amplitude_violation(&fine, params.amplitude_bound).unwrap();
    let outcome = Outcome {
        passed: near <= 1e-3 && far <= 1e-3 && cross <= 1e-9 && amplitude <= 1e-6,
        detail: format!(
            "worst 1 - F: gate points {near:.2e}, far-detuned points {far:.2e} (limit 1e-3) at {steps} steps; \
             optimizer J_max {:.2e} after {} iterations ({:?}); amplitude excess {amplitude:.1e}; oracle agreement {cross:.1e}",
            result.j_max, result.iterations, result.termination
        ),
    };
    (outcome, Some(RobustRun { params, steps }))
}

fn grid_j_max(params: &FourierParametrization, steps: usize) -> f64 {
    let values = evaluate_grid(
        &reqc_model(),
        &default_reqc_grid(),
        &TargetMap::reqc(),
        params,
        &PenaltySpec::none(),
        &ObjectiveSettings::new(steps),
    )
    .unwrap();
    values.iter().map(|v| v.value).fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_6(run: &RobustRun) -> Outcome {
    let naive = naive_2pi_params(24.0 * PI).unwrap();
    let naive_j = grid_j_max(&naive, run.steps);
    let optimized_j = grid_j_max(&run.params, run.steps);
    let ratio = naive_j / optimized_j;
    Outcome {
        passed: ratio >= 100.0,
        detail: format!("naive J_max {naive_j:.3e}, optimized J_max {optimized_j:.3e}, ratio {ratio:.1} (limit 100)"),
    }
}

fn criterion_7(run: &RobustRun) -> Outcome {
    let model = reqc_model();
    let coarse = StepControls::from_source(&run.params, run.steps, Scheme::CommutatorFree4).unwrap();
    let fine = StepControls::from_source(&run.params, 2 * run.steps, Scheme::CommutatorFree4).unwrap();
    let (mut doubling, mut unitarity) = (0.0f64, 0.0f64);
    for xi in &default_reqc_grid().points {
        let a = propagate_forward(&model, xi, &coarse).unwrap();
        let b = propagate_forward(&model, xi, &fine).unwrap();
        doubling = doubling.max(max_abs(&(a.final_operator() - b.final_operator())));
        unitarity = unitarity.max(unitarity_defect(a.final_operator())).max(unitarity_defect(b.final_operator()));
    }
    Outcome {
        passed: doubling <= 1e-8 && unitarity <= 1e-10,
        detail: format!(
            "step doubling {} → {} steps: {doubling:.1e} (limit 1e-8), unitarity drift {unitarity:.1e} (limit 1e-10)",
            run.steps,
            2 * run.steps
        ),
    }
}

#[test]
fn oracles_agree_on_known_cases() {
    // Diagonal O = diag(1, e^{iφ}): the numerical range is the chord, at
    // distance cos(φ/2) from the origin.
    for phi in [0.3, 1.0, 2.0, 3.0] {
        let o = CMat::from_diagonal(&DVector::from_vec(vec![C::new(1.0, 0.0), C::from_polar(1.0, phi)]));
        let expected = (phi / 2.0).cos();
        assert!((numerical_range_distance(&o) - expected).abs() < 1e-12);
        assert!((grid_oracle(&o) - expected).abs() < 1e-8);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 1..5 {
        assert!(unitarity_defect(&haar_unitary(n, &mut rng)) < 1e-14);
    }
    let mut p = FourierParametrization::zeros(4, 0, 1.0, 1.0).unwrap();
    p.set(0, FourierTerm::Dc, 0.5);
    assert_eq!(synthesize(&p, 4).unwrap().samples[2], vec![0.5, 0.0, 0.0, 0.0]);
}

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    let mut run = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        let outcome = f();
        report(id, name, started, &outcome);
        if !outcome.passed {
            failed.push(id);
        }
    };
    run(1, "gradient exactness", &mut criterion_1);
    run(2, "fidelity bound", &mut criterion_2);
    run(3, "optimized adjoint boundary", &mut criterion_3);
    run(4, "ideal-point solvability", &mut criterion_4);
    let mut robust = None;
    run(5, "robust phase gate", &mut || {
        let (outcome, r) = criterion_5();
        robust = r;
        outcome
    });
    let robust = robust.expect("criterion 5 produced a pulse");
    run(6, "improvement over naive pulse", &mut || criterion_6(&robust));
    run(7, "integrator sanity", &mut || criterion_7(&robust));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
