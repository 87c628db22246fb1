//! Small dense complex linear algebra used by the propagator and the fidelity code.
//!
//! Everything here operates on `d × d` matrices with `d` in the single digits, so
//! the routines favour clarity over blocking or cache tricks.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub(crate) const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn zeros(d: usize) -> CMatrix {
    CMatrix::zeros(d, d)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `‖a − b‖_max`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `‖U†U − 1‖_max`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let d = u.nrows();
    max_abs_diff(&(u.adjoint() * u), &identity(d))
}

/// `‖H − H†‖_max`.
pub fn hermiticity_defect(h: &CMatrix) -> f64 {
    max_abs_diff(h, &h.adjoint())
}

/// Singular values, descending.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `tr(a† b)` without forming the product.
pub fn inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Eigendecomposition `H = V diag(λ) V†` of a Hermitian matrix by cyclic
/// Jacobi rotations. Only the upper triangle of `h` is read.
pub fn hermitian_eigen(h: &CMatrix) -> (CMatrix, Vec<f64>) {
    let d = h.nrows();
    let mut a = h.clone();
    for j in 0..d {
        a[(j, j)].im = 0.0;
        for i in j + 1..d {
            a[(i, j)] = a[(j, i)].conj();
        }
    }
    let mut v = identity(d);
    let scale = max_abs(&a).max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..d {
            for q in p + 1..d {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[(p, q)];
                let g = apq.norm();
                if g <= 1e-300 {
                    continue;
                }
                let e = apq / g;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * g);
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // A ← J†AJ, V ← VJ with J_pp = J_qq = c, J_pq = s·e, J_qp = −s·ē.
                let se = e * s;
                for k in 0..d {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = akp * c - akq * se.conj();
                    a[(k, q)] = akp * se + akq * c;
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = vkp * c - vkq * se.conj();
                    v[(k, q)] = vkp * se + vkq * c;
                }
                for k in 0..d {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = apk * c - aqk * se;
                    a[(q, k)] = apk * se.conj() + aqk * c;
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)].im = 0.0;
                a[(q, q)].im = 0.0;
            }
        }
    }
    let values = (0..d).map(|k| a[(k, k)].re).collect();
    (v, values)
}

/// `sin(x)/x`, continuous at zero.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// One exponential factor `exp(−i·dt·H)` of a time step, kept in a form that
/// also gives access to its Fréchet derivative.
#[derive(Debug, Clone)]
pub enum StepExponential {
    /// `H = V diag(λ) V†`.
    Hermitian {
        vectors: CMatrix,
        values: Vec<f64>,
        dt: f64,
        propagator: CMatrix,
    },
    /// General (possibly lossy) generator `A = −i·dt·H`.
    General {
        generator: CMatrix,
        dt: f64,
        propagator: CMatrix,
    },
}

impl StepExponential {
    pub fn hermitian(h: &CMatrix, dt: f64) -> Self {
        let (vectors, values) = hermitian_eigen(h);
        let d = values.len();
        let mut scaled = vectors.clone();
        for (k, &lambda) in values.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -dt * lambda);
            for r in 0..d {
                scaled[(r, k)] *= phase;
            }
        }
        let propagator = &scaled * vectors.adjoint();
        StepExponential::Hermitian {
            vectors,
            values,
            dt,
            propagator,
        }
    }

    pub fn general(h: &CMatrix, dt: f64) -> Self {
        let generator = h * Complex64::new(0.0, -dt);
        let propagator = generator.exp();
        StepExponential::General {
            generator,
            dt,
            propagator,
        }
    }

    pub fn propagator(&self) -> &CMatrix {
        match self {
            StepExponential::Hermitian { propagator, .. } => propagator,
            StepExponential::General { propagator, .. } => propagator,
        }
    }

    /// Returns `tr(Λ† · L(D) · U)` where `L(D)` is the directional derivative of
    /// `exp(−i·dt·H)` with respect to `H` along `D`.
    ///
    /// `kernel` comes from [`Self::kernel`] with the state before the factor and the
    /// adjoint after it; it is shared across control channels.
    pub fn frechet_overlap(&self, kernel: &FrechetKernel, direction: &CMatrix) -> Complex64 {
        match (self, kernel) {
            (StepExponential::Hermitian { .. }, FrechetKernel::Dense(y)) => direction
                .iter()
                .zip(y.iter())
                .filter(|(d, _)| d.re != 0.0 || d.im != 0.0)
                .map(|(d, y)| d * y)
                .sum(),
            (
                StepExponential::General { generator, dt, .. },
                FrechetKernel::Plain { before, after },
            ) => {
                let d = generator.nrows();
                let mut block = CMatrix::zeros(2 * d, 2 * d);
                block.view_mut((0, 0), (d, d)).copy_from(generator);
                block.view_mut((d, d), (d, d)).copy_from(generator);
                let scaled = direction * Complex64::new(0.0, -dt);
                block.view_mut((0, d), (d, d)).copy_from(&scaled);
                let e = block.exp();
                let l = e.view((0, d), (d, d)).clone_owned();
                inner(after, &(l * before))
            }
            _ => panic!("Fréchet kernel does not match step exponential kind"),
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            StepExponential::Hermitian { dt, .. } | StepExponential::General { dt, .. } => *dt,
        }
    }

    /// Precomputes the channel-independent part of [`Self::frechet_overlap`].
    ///
    /// For a Hermitian factor `H = V diag(λ) V†` the derivative is
    /// `L(D) = V (Γ ∘ V†DV) V†` with divided differences
    /// `Γ_jk = (e^{−iλ_j dt} − e^{−iλ_k dt}) / (λ_j − λ_k)`. The overlap is then
    /// linear in `D`, `Σ_ab D_ab Y_ab`, with `Y = conj(V) (Γ ∘ Mᵀ) Vᵀ` and
    /// `M = V† U Λ† V`.
    pub fn kernel(&self, before: &CMatrix, after: &CMatrix) -> FrechetKernel {
        match self {
            StepExponential::Hermitian {
                vectors,
                values,
                dt,
                ..
            } => {
                let m = vectors.adjoint() * before * after.adjoint() * vectors;
                let d = values.len();
                let mut x = CMatrix::zeros(d, d);
                for j in 0..d {
                    for k in 0..d {
                        let mid = 0.5 * (values[j] + values[k]);
                        let half = 0.5 * (values[j] - values[k]);
                        let gamma = Complex64::from_polar(*dt, -dt * mid) * (-I) * sinc(dt * half);
                        x[(j, k)] = gamma * m[(k, j)];
                    }
                }
                FrechetKernel::Dense(vectors.conjugate() * x * vectors.transpose())
            }
            StepExponential::General { .. } => FrechetKernel::Plain {
                before: before.clone(),
                after: after.clone(),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub enum FrechetKernel {
    Dense(CMatrix),
    Plain { before: CMatrix, after: CMatrix },
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
        CMatrix::from_fn(d, d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
        let a = random_matrix(rng, d);
        (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
    }

    #[test]
    fn hermitian_step_matches_pade_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2, 3, 5] {
            let h = random_hermitian(&mut rng, d);
            let step = StepExponential::hermitian(&h, 0.37);
            let reference = (&h * Complex64::new(0.0, -0.37)).exp();
            assert!(max_abs_diff(step.propagator(), &reference) < 1e-13);
            assert!(unitarity_defect(step.propagator()) < 1e-14);
        }
    }

    #[test]
    fn frechet_overlap_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dt = 0.6;
        for hermitian in [true, false] {
            for d in [2, 3] {
                let h = if hermitian { random_hermitian(&mut rng, d) } else { random_matrix(&mut rng, d) };
                let dir = if hermitian { random_hermitian(&mut rng, d) } else { random_matrix(&mut rng, d) };
                let before = random_matrix(&mut rng, d);
                let after = random_matrix(&mut rng, d);
                let step = if hermitian {
                    StepExponential::hermitian(&h, dt)
                } else {
                    StepExponential::general(&h, dt)
                };
                let kernel = step.kernel(&before, &after);
                let analytic = step.frechet_overlap(&kernel, &dir);
                let eps = 1e-6;
                let f = |s: f64| {
                    let hs = &h + &dir * Complex64::new(s, 0.0);
                    let e = (hs * Complex64::new(0.0, -dt)).exp();
                    inner(&after, &(e * &before))
                };
                let fd = (f(eps) - f(-eps)) / (2.0 * eps);
                assert!((fd - analytic).norm() < 1e-8 * (1.0 + fd.norm()), "{hermitian} {d}: {fd} vs {analytic}");
            }
        }
    }

    #[test]
    fn hermitian_eigen_reconstructs_to_roundoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..2000 {
            let d = 1 + trial % 5;
            let mut h = random_hermitian(&mut rng, d);
            if trial % 7 == 0 && d > 1 {
                // Force a degenerate pair.
                h[(0, 0)] = h[(1, 1)];
                h[(0, 1)] = Complex64::new(0.0, 0.0);
                h[(1, 0)] = Complex64::new(0.0, 0.0);
            }
            let (v, values) = hermitian_eigen(&h);
            let lambda = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                d,
                values.iter().map(|&x| Complex64::new(x, 0.0)),
            ));
            assert!(unitarity_defect(&v) < 1e-14, "{trial}");
            assert!(max_abs_diff(&(&v * lambda * v.adjoint()), &h) < 1e-14, "{trial}");
        }
    }

    #[test]
    fn hermitian_eigen_of_three_level_drive() {
        // Resonant Λ-system with couplings a, b: eigenvalues 0 and ±√(|a|² + |b|²).
        let (a, b) = (Complex64::new(0.3, -0.4), Complex64::new(-0.1, 0.7));
        let mut h = zeros(3);
        h[(2, 0)] = a;
        h[(0, 2)] = a.conj();
        h[(2, 1)] = b;
        h[(1, 2)] = b.conj();
        let (_, mut values) = hermitian_eigen(&h);
        values.sort_by(f64::total_cmp);
        let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
        for (x, y) in values.iter().zip([-r, 0.0, r]) {
            assert!((x - y).abs() < 1e-15, "{values:?}");
        }
    }

    #[test]
    fn degenerate_eigenvalues_use_derivative_limit() {
        let h = identity(3) * Complex64::new(2.0, 0.0);
        let step = StepExponential::hermitian(&h, 0.5);
        let dir = identity(3);
        let kernel = step.kernel(&identity(3), &identity(3));
        // d/ds tr(exp(−i·dt·(2 + s)·1)) at s = 0 equals −i·dt·3·e^{−2i·dt}.
        let expected = Complex64::new(0.0, -0.5) * 3.0 * Complex64::from_polar(1.0, -1.0);
        assert!((step.frechet_overlap(&kernel, &dir) - expected).norm() < 1e-14);
    }
}
