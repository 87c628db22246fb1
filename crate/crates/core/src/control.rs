//! Control waveforms: truncated Fourier parametrization, sampled waveforms and
//! the amplitude bound on quadrature pairs.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that can report the control vector at an arbitrary time in `[0, T]`.
pub trait ControlSource: Sync {
    fn n_channels(&self) -> usize;
    fn duration(&self) -> f64;
    fn sample(&self, t: f64, out: &mut [f64]);

    fn sample_vec(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_channels()];
        self.sample(t, &mut out);
        out
    }
}

/// Which term of a channel's Fourier series a coefficient multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourierTerm {
    Dc,
    Cos(usize),
    Sin(usize),
}

/// Real controls `ε_c(t) = dc_c + Σ_k a_ck cos(2πkt/T) + b_ck sin(2πkt/T)`.
///
/// Coefficients are stored channel-major; each channel owns `2K + 1` entries in
/// the order `[dc, a_1..a_K, b_1..b_K]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierParametrization {
    pub n_controls: usize,
    pub n_harmonics: usize,
    pub duration: f64,
    pub coefficients: Vec<f64>,
    pub amplitude_bound: f64,
}

impl FourierParametrization {
    pub fn zeros(
        n_controls: usize,
        n_harmonics: usize,
        duration: f64,
        amplitude_bound: f64,
    ) -> Result<Self> {
        let p = FourierParametrization {
            n_controls,
            n_harmonics,
            duration,
            coefficients: vec![0.0; n_controls * (2 * n_harmonics + 1)],
            amplitude_bound,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid("duration", "must be finite and > 0"));
        }
        if !(self.amplitude_bound.is_finite() && self.amplitude_bound > 0.0) {
            return Err(Error::invalid("amplitude_bound", "must be finite and > 0"));
        }
        if self.n_controls == 0 {
            return Err(Error::invalid("n_controls", "must be >= 1"));
        }
        if self.coefficients.len() != self.n_controls * self.stride() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients, got {}",
                self.n_controls * self.stride(),
                self.coefficients.len()
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("Fourier coefficients".into()));
        }
        Ok(())
    }

    /// Number of coefficients per channel.
    pub fn stride(&self) -> usize {
        2 * self.n_harmonics + 1
    }

    pub fn n_coefficients(&self) -> usize {
        self.coefficients.len()
    }

    pub fn index(&self, channel: usize, term: FourierTerm) -> usize {
        let offset = match term {
            FourierTerm::Dc => 0,
            FourierTerm::Cos(k) => {
                assert!(k >= 1 && k <= self.n_harmonics, "harmonic {k} out of range");
                k
            }
            FourierTerm::Sin(k) => {
                assert!(k >= 1 && k <= self.n_harmonics, "harmonic {k} out of range");
                self.n_harmonics + k
            }
        };
        channel * self.stride() + offset
    }

    pub fn set(&mut self, channel: usize, term: FourierTerm, value: f64) {
        let i = self.index(channel, term);
        self.coefficients[i] = value;
    }

    pub fn with_coefficients(&self, coefficients: Vec<f64>) -> Self {
        FourierParametrization {
            coefficients,
            ..self.clone()
        }
    }

    /// Values of the `2K + 1` basis functions at `t`, shared by every channel.
    pub fn basis(&self, t: f64, out: &mut [f64]) {
        let k_max = self.n_harmonics;
        out[0] = 1.0;
        let w = TAU * t / self.duration;
        for k in 1..=k_max {
            let (s, c) = (w * k as f64).sin_cos();
            out[k] = c;
            out[k_max + k] = s;
        }
    }

    pub fn time_grid(&self, n_steps: usize) -> Vec<f64> {
        uniform_grid(self.duration, n_steps)
    }
}

impl ControlSource for FourierParametrization {
    fn n_channels(&self) -> usize {
        self.n_controls
    }

    fn duration(&self) -> f64 {
        self.duration
    }

    fn sample(&self, t: f64, out: &mut [f64]) {
        let mut basis = vec![0.0; self.stride()];
        self.basis(t, &mut basis);
        for (c, chunk) in self.coefficients.chunks(self.stride()).enumerate() {
            out[c] = chunk.iter().zip(&basis).map(|(a, b)| a * b).sum();
        }
    }
}

/// `n_steps + 1` equally spaced times with exact end points.
pub fn uniform_grid(duration: f64, n_steps: usize) -> Vec<f64> {
    let dt = duration / n_steps as f64;
    let mut grid: Vec<f64> = (0..=n_steps).map(|i| i as f64 * dt).collect();
    grid[n_steps] = duration;
    grid
}

/// Control vectors sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlWaveform {
    pub time_grid: Vec<f64>,
    /// `samples[i][c]` is channel `c` at `time_grid[i]`.
    pub samples: Vec<Vec<f64>>,
}

impl ControlWaveform {
    pub fn new(time_grid: Vec<f64>, samples: Vec<Vec<f64>>) -> Result<Self> {
        if time_grid.len() < 2 {
            return Err(Error::invalid("time_grid", "needs at least two points"));
        }
        if time_grid[0] != 0.0 {
            return Err(Error::invalid("time_grid", "must start at 0"));
        }
        if time_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("time_grid", "must be strictly increasing"));
        }
        if samples.len() != time_grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for {} grid points",
                samples.len(),
                time_grid.len()
            )));
        }
        let m = samples[0].len();
        if samples.iter().any(|s| s.len() != m) {
            return Err(Error::DimensionMismatch("ragged sample rows".into()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("waveform samples".into()));
        }
        Ok(ControlWaveform { time_grid, samples })
    }

    /// Samples an arbitrary source on `n_steps + 1` uniform points.
    pub fn from_source(source: &dyn ControlSource, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be >= 1"));
        }
        let grid = uniform_grid(source.duration(), n_steps);
        let samples = grid.iter().map(|&t| source.sample_vec(t)).collect();
        ControlWaveform::new(grid, samples)
    }

    pub fn n_steps(&self) -> usize {
        self.time_grid.len() - 1
    }

    pub fn duration(&self) -> f64 {
        *self.time_grid.last().unwrap()
    }

    pub fn n_channels(&self) -> usize {
        self.samples[0].len()
    }

    /// Header `t,eps_1,...,eps_m`, one row per sample, shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for c in 1..=self.n_channels() {
            write!(out, ",eps_{c}").unwrap();
        }
        out.push('\n');
        for (t, row) in self.time_grid.iter().zip(&self.samples) {
            write!(out, "{t}").unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Csv {
            line: 1,
            reason: "empty file".into(),
        })?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        if columns.first() != Some(&"t")
            || columns
                .iter()
                .skip(1)
                .enumerate()
                .any(|(i, c)| *c != format!("eps_{}", i + 1))
        {
            return Err(Error::Csv {
                line: 1,
                reason: format!("unexpected header `{header}`"),
            });
        }
        let mut grid = Vec::new();
        let mut samples = Vec::new();
        for (idx, line) in lines {
            let values = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Csv {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            if values.len() != columns.len() {
                return Err(Error::Csv {
                    line: idx + 1,
                    reason: format!("expected {} fields, got {}", columns.len(), values.len()),
                });
            }
            grid.push(values[0]);
            samples.push(values[1..].to_vec());
        }
        ControlWaveform::new(grid, samples)
    }
}

impl ControlSource for ControlWaveform {
    fn n_channels(&self) -> usize {
        ControlWaveform::n_channels(self)
    }

    fn duration(&self) -> f64 {
        ControlWaveform::duration(self)
    }

    /// Piecewise-linear interpolation between samples, clamped at the ends.
    fn sample(&self, t: f64, out: &mut [f64]) {
        let grid = &self.time_grid;
        let i = match grid.partition_point(|&g| g <= t) {
            0 => 0,
            n if n >= grid.len() => grid.len() - 2,
            n => n - 1,
        };
        let w = ((t - grid[i]) / (grid[i + 1] - grid[i])).clamp(0.0, 1.0);
        for (c, o) in out.iter_mut().enumerate() {
            *o = (1.0 - w) * self.samples[i][c] + w * self.samples[i + 1][c];
        }
    }
}

/// Evaluates the Fourier series on `n_steps + 1` uniform samples.
pub fn synthesize(params: &FourierParametrization, n_steps: usize) -> Result<ControlWaveform> {
    params.validate()?;
    ControlWaveform::from_source(params, n_steps)
}

/// `∂ε_c(t_i)/∂coefficient`, which for a linear synthesis is just the basis
/// functions evaluated at the sample times. The map is block diagonal over
/// channels, so only one basis table is stored.
#[derive(Debug, Clone)]
pub struct SynthesisJacobian {
    pub n_controls: usize,
    pub stride: usize,
    pub times: Vec<f64>,
    basis: Vec<f64>,
}

impl SynthesisJacobian {
    pub fn at_times(params: &FourierParametrization, times: &[f64]) -> Self {
        let stride = params.stride();
        let mut basis = vec![0.0; times.len() * stride];
        for (row, &t) in basis.chunks_mut(stride).zip(times) {
            params.basis(t, row);
        }
        SynthesisJacobian {
            n_controls: params.n_controls,
            stride,
            times: times.to_vec(),
            basis,
        }
    }

    pub fn n_coefficients(&self) -> usize {
        self.n_controls * self.stride
    }

    pub fn basis_row(&self, sample: usize) -> &[f64] {
        &self.basis[sample * self.stride..(sample + 1) * self.stride]
    }

    /// `∂ε_channel(t_sample)/∂coefficients[coefficient]`.
    pub fn entry(&self, sample: usize, channel: usize, coefficient: usize) -> f64 {
        if coefficient / self.stride != channel {
            0.0
        } else {
            self.basis_row(sample)[coefficient % self.stride]
        }
    }

    /// Jacobian-vector product: sample perturbations caused by a coefficient
    /// perturbation. Result is indexed `[sample][channel]`.
    pub fn apply(&self, direction: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(direction.len(), self.n_coefficients());
        (0..self.times.len())
            .map(|i| {
                let row = self.basis_row(i);
                direction
                    .chunks(self.stride)
                    .map(|chunk| chunk.iter().zip(row).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect()
    }

    /// Vector-Jacobian product: pulls per-sample sensitivities (flat,
    /// `[sample * n_controls + channel]`) back to coefficient space.
    pub fn transpose_apply(&self, sensitivities: &[f64]) -> Vec<f64> {
        assert_eq!(sensitivities.len(), self.times.len() * self.n_controls);
        let mut out = vec![0.0; self.n_coefficients()];
        for (i, sens) in sensitivities.chunks(self.n_controls).enumerate() {
            let row = self.basis_row(i);
            for (c, &g) in sens.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let block = &mut out[c * self.stride..(c + 1) * self.stride];
                for (o, b) in block.iter_mut().zip(row) {
                    *o += g * b;
                }
            }
        }
        out
    }
}

/// Jacobian of [`synthesize`] on its own sample grid.
pub fn synthesis_jacobian(
    params: &FourierParametrization,
    n_steps: usize,
) -> Result<SynthesisJacobian> {
    params.validate()?;
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", "must be >= 1"));
    }
    Ok(SynthesisJacobian::at_times(params, &params.time_grid(n_steps)))
}

/// `max(0, √(ε_i² + ε_q²) − Ω_max)` for each sample and each quadrature pair
/// `(2p, 2p + 1)`. Result is indexed `[sample][pair]`.
pub fn amplitude_violation(waveform: &ControlWaveform, bound: f64) -> Result<Vec<Vec<f64>>> {
    let m = waveform.n_channels();
    if m % 2 != 0 {
        return Err(Error::invalid(
            "waveform",
            format!("{m} channels cannot be split into quadrature pairs"),
        ));
    }
    Ok(waveform
        .samples
        .iter()
        .map(|row| {
            row.chunks(2)
                .map(|pair| (pair[0].hypot(pair[1]) - bound).max(0.0))
                .collect()
        })
        .collect())
}

/// Largest entry of [`amplitude_violation`].
pub fn max_amplitude_violation(waveform: &ControlWaveform, bound: f64) -> Result<f64> {
    Ok(amplitude_violation(waveform, bound)?
        .iter()
        .flatten()
        .fold(0.0, |a: f64, &b| a.max(b)))
}

/// Largest `√(ε_{2p}(t)² + ε_{2p+1}(t)²)` over `t ∈ [0, T]` and all quadrature
/// pairs. Local maxima on a grid of `64(2K + 1)` samples are polished by
/// golden-section search, so the result is the true peak, not a sampled one.
pub fn peak_amplitude(params: &FourierParametrization) -> Result<f64> {
    params.validate()?;
    let m = params.n_controls;
    if m % 2 != 0 {
        return Err(Error::invalid(
            "params",
            format!("{m} channels cannot be split into quadrature pairs"),
        ));
    }
    if m == 0 {
        return Ok(0.0);
    }
    let n = (64 * (2 * params.n_harmonics + 1)).max(256);
    let t = params.duration;
    let mut buf = vec![0.0; m];
    let amplitudes = |time: f64, buf: &mut [f64]| -> Vec<f64> {
        params.sample(time, buf);
        buf.chunks(2).map(|p| p[0].hypot(p[1])).collect()
    };
    let grid: Vec<Vec<f64>> = (0..=n)
        .map(|i| amplitudes(t * i as f64 / n as f64, &mut buf))
        .collect();
    let mut peak = 0.0f64;
    for pair in 0..m / 2 {
        let values: Vec<f64> = grid.iter().map(|row| row[pair]).collect();
        let coarse = values.iter().cloned().fold(0.0, f64::max);
        peak = peak.max(coarse);
        for i in 0..=n {
            let left = if i > 0 { values[i - 1] } else { f64::NEG_INFINITY };
            let right = if i < n { values[i + 1] } else { f64::NEG_INFINITY };
            if values[i] < left || values[i] < right || values[i] < 0.99 * coarse {
                continue;
            }
            let (mut a, mut b) = (t * (i.max(1) - 1) as f64 / n as f64, t * (i + 1).min(n) as f64 / n as f64);
            let r = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..60 {
                let c = b - r * (b - a);
                let d = a + r * (b - a);
                if amplitudes(c, &mut buf)[pair] > amplitudes(d, &mut buf)[pair] {
                    b = d;
                } else {
                    a = c;
                }
            }
            peak = peak.max(amplitudes(0.5 * (a + b), &mut buf)[pair]);
        }
    }
    Ok(peak)
}
