//! Limited-memory quasi-Newton minimization with simple bounds.
//!
//! Variables sitting on a bound with the gradient pushing outward are frozen
//! for the step; the remaining ones get an L-BFGS direction. Steps that stay
//! inside the box use a strong-Wolfe line search, steps that would leave it are
//! projected and backtracked (Armijo along the projected path).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

const ARMIJO: f64 = 1e-4;
const CURVATURE: f64 = 0.9;
const MAX_LINE_SEARCH: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(lower.iter().zip(&upper).all(|(l, u)| l <= u), "empty box");
        Bounds { lower, upper }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Components of the projected gradient `P(x − g) − x`, with sign flipped
    /// so that it is zero exactly where first-order optimality holds.
    pub fn projected_gradient(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(g)
            .zip(self.lower.iter().zip(&self.upper))
            .map(|((&xi, &gi), (&l, &u))| xi - (xi - gi).clamp(l, u))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsbOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when `‖projected gradient‖_∞ ≤ grad_tol`.
    pub grad_tol: f64,
    /// Stop when `‖x_{k+1} − x_k‖_∞ ≤ step_tol`.
    pub step_tol: f64,
    /// Stop when the relative decrease of `f` falls below this (0 disables).
    pub f_rel_tol: f64,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        LbfgsbOptions {
            memory: 10,
            max_iters: 1000,
            grad_tol: 1e-8,
            step_tol: 1e-12,
            f_rel_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    FunctionTolerance,
    MaxIterations,
    LineSearchFailed,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::GradientTolerance | Termination::StepTolerance | Termination::FunctionTolerance
        )
    }
}

/// State after an accepted step.
#[derive(Debug, Clone)]
pub struct IterationInfo {
    pub iteration: usize,
    pub f: f64,
    pub projected_grad_norm: f64,
    pub step_norm: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct LbfgsbResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

struct Evaluator<F> {
    f: F,
    count: usize,
}

impl<F, E> Evaluator<F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), E> {
        self.count += 1;
        (self.f)(x)
    }
}

struct Trial {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimizes `objective` over the box. `observer` sees every accepted iterate.
pub fn minimize<F, E, O>(
    objective: F,
    x0: Vec<f64>,
    bounds: &Bounds,
    options: &LbfgsbOptions,
    mut observer: O,
) -> Result<LbfgsbResult, E>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    O: FnMut(&IterationInfo, &[f64]),
{
    assert_eq!(x0.len(), bounds.len(), "x0 and bounds differ in length");
    let n = x0.len();
    let mut ev = Evaluator { f: objective, count: 0 };
    let mut x = x0;
    bounds.project(&mut x);
    let (mut f, mut g) = ev.eval(&x)?;
    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(options.memory);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < options.max_iters {
        let pg = bounds.projected_gradient(&x, &g);
        if inf_norm(&pg) <= options.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let free: Vec<bool> = (0..n)
            .map(|i| {
                let at_lower = x[i] <= bounds.lower[i] && g[i] > 0.0;
                let at_upper = x[i] >= bounds.upper[i] && g[i] < 0.0;
                !(at_lower || at_upper)
            })
            .collect();

        let mut d = two_loop(&g, &free, &memory);
        if !(dot(&d, &g) < 0.0) {
            memory.clear();
            d = pg.iter().map(|v| -v).collect();
        }

        let alpha0 = if memory.is_empty() {
            (1.0 / inf_norm(&d)).min(1.0)
        } else {
            1.0
        };
        let alpha_max = max_feasible_step(&x, &d, bounds);

        let trial = if alpha_max >= alpha0 {
            strong_wolfe(&mut ev, &x, f, &g, &d, alpha0, alpha_max)?
        } else {
            projected_backtracking(&mut ev, &x, f, &g, &d, alpha0, bounds)?
        };
        let Some(trial) = trial else {
            if memory.is_empty() {
                termination = Termination::LineSearchFailed;
                break;
            }
            memory.clear();
            continue;
        };

        let s: Vec<f64> = trial.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = trial.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if memory.len() == options.memory.max(1) {
                memory.pop_front();
            }
            memory.push_back(Pair { s: s.clone(), y, rho: 1.0 / sy });
        }

        let step_norm = inf_norm(&s);
        let f_prev = f;
        x = trial.x;
        f = trial.f;
        g = trial.g;
        iterations += 1;

        observer(
            &IterationInfo {
                iteration: iterations,
                f,
                projected_grad_norm: inf_norm(&bounds.projected_gradient(&x, &g)),
                step_norm,
                evaluations: ev.count,
            },
            &x,
        );

        if step_norm <= options.step_tol {
            termination = Termination::StepTolerance;
            break;
        }
        if options.f_rel_tol > 0.0
            && (f_prev - f) <= options.f_rel_tol * f_prev.abs().max(f.abs()).max(f64::MIN_POSITIVE)
        {
            termination = Termination::FunctionTolerance;
            break;
        }
    }
    if termination == Termination::MaxIterations
        && inf_norm(&bounds.projected_gradient(&x, &g)) <= options.grad_tol
    {
        termination = Termination::GradientTolerance;
    }

    Ok(LbfgsbResult {
        x,
        f,
        gradient: g,
        iterations,
        evaluations: ev.count,
        termination,
    })
}

fn two_loop(g: &[f64], free: &[bool], memory: &VecDeque<Pair>) -> Vec<f64> {
    let mut q: Vec<f64> = g
        .iter()
        .zip(free)
        .map(|(&v, &f)| if f { v } else { 0.0 })
        .collect();
    let mut alphas = Vec::with_capacity(memory.len());
    for pair in memory.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = memory.back() {
        let gamma = 1.0 / (last.rho * dot(&last.y, &last.y));
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for (pair, a) in memory.iter().zip(alphas.iter().rev()) {
        let b = pair.rho * dot(&pair.y, &q);
        for (qi, si) in q.iter_mut().zip(&pair.s) {
            *qi += si * (a - b);
        }
    }
    q.iter()
        .zip(free)
        .map(|(&v, &f)| if f { -v } else { 0.0 })
        .collect()
}

fn max_feasible_step(x: &[f64], d: &[f64], bounds: &Bounds) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..x.len() {
        if d[i] > 0.0 && bounds.upper[i].is_finite() {
            alpha = alpha.min((bounds.upper[i] - x[i]) / d[i]);
        } else if d[i] < 0.0 && bounds.lower[i].is_finite() {
            alpha = alpha.min((bounds.lower[i] - x[i]) / d[i]);
        }
    }
    alpha.max(0.0)
}

fn point(x: &[f64], d: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

fn strong_wolfe<F, E>(
    ev: &mut Evaluator<F>,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha0: f64,
    alpha_max: f64,
) -> Result<Option<Trial>, E>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    let dphi0 = dot(g0, d);
    let mut eval = |alpha: f64| -> Result<(Trial, f64), E> {
        let xa = point(x, d, alpha);
        let (fa, ga) = ev.eval(&xa)?;
        let dphi = dot(&ga, d);
        Ok((Trial { alpha, x: xa, f: fa, g: ga }, dphi))
    };
    let sufficient = |t: &Trial| t.f.is_finite() && t.f <= f0 + ARMIJO * t.alpha * dphi0;

    let mut prev_alpha = 0.0;
    let mut prev_f = f0;
    let mut prev_dphi = dphi0;
    let mut prev_trial: Option<Trial> = None;
    let mut alpha = alpha0.min(alpha_max);

    for i in 0..MAX_LINE_SEARCH {
        let (trial, dphi) = eval(alpha)?;
        if !sufficient(&trial) || (i > 0 && trial.f >= prev_f) {
            return zoom(
                &mut eval,
                (prev_alpha, prev_f, prev_dphi, prev_trial),
                (alpha, trial.f, dphi),
                f0,
                dphi0,
            );
        }
        if dphi.abs() <= -CURVATURE * dphi0 {
            return Ok(Some(trial));
        }
        if dphi >= 0.0 {
            let (hi_alpha, hi_f) = (prev_alpha, prev_f);
            return zoom(
                &mut eval,
                (alpha, trial.f, dphi, Some(trial)),
                (hi_alpha, hi_f, prev_dphi),
                f0,
                dphi0,
            );
        }
        if alpha >= alpha_max {
            return Ok(Some(trial));
        }
        prev_alpha = alpha;
        prev_f = trial.f;
        prev_dphi = dphi;
        prev_trial = Some(trial);
        alpha = (2.0 * alpha).min(alpha_max);
    }
    Ok(prev_trial)
}

/// Cubic interpolation between two points with derivatives, safeguarded to
/// the middle of the bracket.
fn interpolate(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let candidate = if disc >= 0.0 && fa.is_finite() && fb.is_finite() {
        let d2 = (b - a).signum() * disc.sqrt();
        b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
    } else {
        f64::NAN
    };
    let margin = 0.1 * (hi - lo);
    if candidate.is_finite() && candidate > lo + margin && candidate < hi - margin {
        candidate
    } else {
        0.5 * (lo + hi)
    }
}

type Endpoint = (f64, f64, f64);

fn zoom<E>(
    eval: &mut impl FnMut(f64) -> Result<(Trial, f64), E>,
    lo: (f64, f64, f64, Option<Trial>),
    hi: Endpoint,
    f0: f64,
    dphi0: f64,
) -> Result<Option<Trial>, E> {
    let (mut lo_alpha, mut lo_f, mut lo_dphi, mut lo_trial) = lo;
    let (mut hi_alpha, mut hi_f, mut hi_dphi) = hi;
    for _ in 0..MAX_LINE_SEARCH {
        let alpha = interpolate(lo_alpha, lo_f, lo_dphi, hi_alpha, hi_f, hi_dphi);
        if (hi_alpha - lo_alpha).abs() <= 1e-16 * lo_alpha.abs().max(1.0) {
            break;
        }
        let (trial, dphi) = eval(alpha)?;
        let armijo = trial.f.is_finite() && trial.f <= f0 + ARMIJO * alpha * dphi0;
        if !armijo || trial.f >= lo_f {
            hi_alpha = alpha;
            hi_f = trial.f;
            hi_dphi = dphi;
        } else {
            if dphi.abs() <= -CURVATURE * dphi0 {
                return Ok(Some(trial));
            }
            if dphi * (hi_alpha - lo_alpha) >= 0.0 {
                hi_alpha = lo_alpha;
                hi_f = lo_f;
                hi_dphi = lo_dphi;
            }
            lo_alpha = alpha;
            lo_f = trial.f;
            lo_dphi = dphi;
            lo_trial = Some(trial);
        }
    }
    // Fall back to the best sufficient-decrease point seen, if any.
    Ok(lo_trial.filter(|t| t.alpha > 0.0))
}

fn projected_backtracking<F, E>(
    ev: &mut Evaluator<F>,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha0: f64,
    bounds: &Bounds,
) -> Result<Option<Trial>, E>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    let mut alpha = alpha0;
    for _ in 0..MAX_LINE_SEARCH {
        let mut xa = point(x, d, alpha);
        bounds.project(&mut xa);
        let decrease: f64 = g0.iter().zip(xa.iter().zip(x)).map(|(g, (a, b))| g * (a - b)).sum();
        if decrease >= 0.0 {
            alpha *= 0.5;
            continue;
        }
        let (fa, ga) = ev.eval(&xa)?;
        if fa.is_finite() && fa <= f0 + ARMIJO * decrease {
            return Ok(Some(Trial { alpha, x: xa, f: fa, g: ga }));
        }
        alpha *= 0.5;
    }
    Ok(None)
}
