//! Reference pulses (a single resonant 2π pulse and a chirped sech sequence)
//! and fidelity landscapes over `(γ, δ)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControlSource, ControlWaveform, FourierParametrization, FourierTerm};
use crate::error::{Error, Result};
use crate::minimax::TargetMap;
use crate::objective::FidelityReport;
use crate::propagator::{propagate_forward, Scheme, StepControls};
use crate::system::{HamiltonianModel, SystemParameters};

/// Constant drive on the first quadrature with area `γΩT = 2π` at `γ = 1`.
pub fn naive_2pi_params(duration: f64) -> Result<FourierParametrization> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid("duration", "must be > 0"));
    }
    let amplitude = std::f64::consts::TAU / duration;
    let mut p = FourierParametrization::zeros(4, 0, duration, amplitude.max(1.0))?;
    p.set(0, FourierTerm::Dc, amplitude);
    Ok(p)
}

pub fn naive_2pi_pulse(duration: f64, n_steps: usize) -> Result<ControlWaveform> {
    ControlWaveform::from_source(&naive_2pi_params(duration)?, n_steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    /// `|0⟩–|e⟩`, channels 0 and 1.
    Zero,
    /// `|1⟩–|e⟩`, channels 2 and 3.
    One,
}

impl Transition {
    fn channel(self) -> usize {
        match self {
            Transition::Zero => 0,
            Transition::One => 2,
        }
    }
}

/// `Ω(t) = Ω_s sech(β(t − t_c)) exp(i[μ ln cosh(β(t − t_c)) + Δt + φ₀])` on
/// `[start, start + segment_duration]`, centred in the segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SechPulseSpec {
    pub peak_amplitude: f64,
    pub width: f64,
    pub chirp: f64,
    pub carrier_detuning: f64,
    pub phase_offset: f64,
    pub transition: Transition,
    pub start: f64,
    pub segment_duration: f64,
}

impl SechPulseSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.peak_amplitude,
            self.width,
            self.chirp,
            self.carrier_detuning,
            self.phase_offset,
            self.start,
            self.segment_duration,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("sech pulse parameters".into()));
        }
        if self.width <= 0.0 {
            return Err(Error::invalid("sech.width", "must be > 0"));
        }
        if self.segment_duration <= 0.0 {
            return Err(Error::invalid("sech.segment_duration", "must be > 0"));
        }
        if self.start < 0.0 {
            return Err(Error::invalid("sech.start", "must be >= 0"));
        }
        Ok(())
    }

    pub fn end(&self) -> f64 {
        self.start + self.segment_duration
    }

    fn center(&self) -> f64 {
        self.start + 0.5 * self.segment_duration
    }

    /// Complex Rabi frequency at `t`, zero outside the segment.
    pub fn rabi(&self, t: f64) -> (f64, f64) {
        if t < self.start || t > self.end() {
            return (0.0, 0.0);
        }
        let x = self.width * (t - self.center());
        let cosh = x.cosh();
        let amplitude = self.peak_amplitude / cosh;
        let phase = self.chirp * cosh.ln() + self.carrier_detuning * t + self.phase_offset;
        (amplitude * phase.cos(), amplitude * phase.sin())
    }
}

/// Concatenated sech segments, evaluated analytically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SechSequence {
    pub segments: Vec<SechPulseSpec>,
    pub duration: f64,
}

impl SechSequence {
    pub fn new(segments: Vec<SechPulseSpec>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("sech.segments", "must not be empty"));
        }
        for s in &segments {
            s.validate()?;
        }
        let mut order: Vec<&SechPulseSpec> = segments.iter().collect();
        order.sort_by(|a, b| a.start.total_cmp(&b.start));
        for pair in order.windows(2) {
            if pair[1].start < pair[0].end() - 1e-12 * pair[0].end().max(1.0) {
                return Err(Error::invalid(
                    "sech.segments",
                    format!("segment at {} overlaps the one ending at {}", pair[1].start, pair[0].end()),
                ));
            }
        }
        let duration = order.iter().map(|s| s.end()).fold(0.0, f64::max);
        Ok(SechSequence { segments, duration })
    }

    pub fn waveform(&self, n_steps: usize) -> Result<ControlWaveform> {
        ControlWaveform::from_source(self, n_steps)
    }
}

impl ControlSource for SechSequence {
    fn n_channels(&self) -> usize {
        4
    }

    fn duration(&self) -> f64 {
        self.duration
    }

    fn sample(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        // Where two segments touch, the later one wins.
        if let Some(s) = self
            .segments
            .iter()
            .filter(|s| t >= s.start && t <= s.end())
            .max_by(|a, b| a.start.total_cmp(&b.start))
        {
            let (re, im) = s.rabi(t);
            let c = s.transition.channel();
            out[c] = re;
            out[c + 1] = im;
        }
    }
}

pub fn sech_sequence(segments: Vec<SechPulseSpec>, n_steps: usize) -> Result<ControlWaveform> {
    SechSequence::new(segments)?.waveform(n_steps)
}

/// Parameters shared by the four segments of [`default_sech_sequence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SechDefaults {
    pub peak_amplitude: f64,
    pub chirp: f64,
    /// `None` picks `β = Ω_s / √(μ² + 1)`.
    pub width: Option<f64>,
    /// Phase offset of the second `|0⟩` segment.
    pub return_phase: f64,
}

impl Default for SechDefaults {
    fn default() -> Self {
        SechDefaults {
            peak_amplitude: 1.0,
            chirp: 1.5,
            width: None,
            return_phase: std::f64::consts::PI,
        }
    }
}

/// Two chirped sech pulses on `|0⟩–|e⟩` followed by the same pair on
/// `|1⟩–|e⟩`, each segment a quarter of `duration`.
pub fn default_sech_sequence(duration: f64, defaults: &SechDefaults) -> Result<SechSequence> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid("duration", "must be > 0"));
    }
    let width = defaults
        .width
        .unwrap_or(defaults.peak_amplitude / (defaults.chirp * defaults.chirp + 1.0).sqrt());
    let quarter = duration / 4.0;
    let plan = [
        (Transition::Zero, 0.0),
        (Transition::Zero, defaults.return_phase),
        (Transition::One, 0.0),
        (Transition::One, 0.0),
    ];
    let segments = plan
        .iter()
        .enumerate()
        .map(|(i, &(transition, phase_offset))| SechPulseSpec {
            peak_amplitude: defaults.peak_amplitude,
            width,
            chirp: defaults.chirp,
            carrier_detuning: 0.0,
            phase_offset,
            transition,
            start: i as f64 * quarter,
            segment_duration: quarter,
        })
        .collect();
    SechSequence::new(segments)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeCell {
    pub gamma: f64,
    pub delta: f64,
    pub report: FidelityReport,
}

/// Fidelities on a `γ × δ` lattice, row-major with `γ` outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub gammas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub cells: Vec<LandscapeCell>,
}

/// `n` evenly spaced values from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn landscape(
    model: &dyn HamiltonianModel,
    source: &dyn ControlSource,
    targets: &TargetMap,
    gammas: &[f64],
    deltas: &[f64],
    n_steps: usize,
    scheme: Scheme,
) -> Result<Landscape> {
    if gammas.is_empty() || deltas.is_empty() {
        return Err(Error::invalid("landscape", "ranges must not be empty"));
    }
    let controls = StepControls::from_source(source, n_steps, scheme)?;
    let points: Vec<SystemParameters> = gammas
        .iter()
        .flat_map(|&g| deltas.iter().map(move |&d| (g, d)))
        .map(|(g, d)| SystemParameters::new(g, d))
        .collect::<Result<_>>()?;
    let cells = points
        .par_iter()
        .map(|xi| {
            let run = || -> Result<LandscapeCell> {
                let fwd = propagate_forward(model, xi, &controls)?;
                let report = FidelityReport::new(
                    targets.target_for(xi),
                    fwd.final_operator(),
                    model.qubit_indices(),
                )?;
                Ok(LandscapeCell {
                    gamma: xi.gamma,
                    delta: xi.delta,
                    report,
                })
            };
            run().map_err(|e| Error::AtGridPoint {
                xi: *xi,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Landscape {
        gammas: gammas.to_vec(),
        deltas: deltas.to_vec(),
        cells,
    })
}

impl Landscape {
    pub fn cell(&self, gamma_index: usize, delta_index: usize) -> &LandscapeCell {
        &self.cells[gamma_index * self.deltas.len() + delta_index]
    }

    /// `gamma,delta,F,T` with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma,delta,F,T\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:.11e},{:.11e},{:.11e},{:.11e}",
                c.gamma, c.delta, c.report.worst_case_fidelity, c.report.trace_fidelity
            );
        }
        out
    }

    /// Replaces each error `1 − F` (and `1 − T`) by its maximum over the
    /// cells of the same row that lie at least as far from `δ = 0` on the
    /// same side, giving an envelope that is monotone in `|δ|`.
    pub fn running_max(&self) -> Landscape {
        let nd = self.deltas.len();
        let mut cells = self.cells.clone();
        for row in cells.chunks_mut(nd) {
            let snapshot = row.to_vec();
            for cell in row.iter_mut() {
                let outward = snapshot.iter().filter(|o| {
                    o.delta.abs() >= cell.delta.abs() && (o.delta >= 0.0) == (cell.delta >= 0.0)
                });
                let (mut ef, mut et) = (0.0f64, 0.0f64);
                for o in outward {
                    ef = ef.max(1.0 - o.report.worst_case_fidelity);
                    et = et.max(1.0 - o.report.trace_fidelity);
                }
                cell.report.worst_case_fidelity = 1.0 - ef;
                cell.report.trace_fidelity = 1.0 - et;
            }
        }
        Landscape {
            gammas: self.gammas.clone(),
            deltas: self.deltas.clone(),
            cells,
        }
    }
}

/// Python script that draws a heat map of `1 − F` from a landscape CSV.
pub fn plot_script(csv_name: &str, title: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
import sys

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
data = np.genfromtxt(path, delimiter=",", names=True)
gammas = np.unique(data["gamma"])
deltas = np.unique(data["delta"])
F = data["F"].reshape(len(gammas), len(deltas))
err = np.clip(1.0 - F, 1e-16, None)

fig, ax = plt.subplots(figsize=(7, 4))
mesh = ax.pcolormesh(deltas, gammas, np.log10(err), shading="auto", cmap="viridis")
fig.colorbar(mesh, ax=ax, label="log10(1 - F)")
ax.set_xlabel("delta / Omega_0")
ax.set_ylabel("gamma")
ax.set_title("{title}")
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::synthesize;
    use crate::system::{identity_target, phase_gate_target, reqc_model};

    const T24: f64 = 24.0 * std::f64::consts::PI;

    fn fidelity(source: &dyn ControlSource, gamma: f64, delta: f64, far: bool, n: usize) -> FidelityReport {
        let model = reqc_model();
        let controls = StepControls::from_source(source, n, Scheme::default()).unwrap();
        let fwd = propagate_forward(&model, &SystemParameters::new(gamma, delta).unwrap(), &controls).unwrap();
        let target = if far { identity_target(2).unwrap() } else { phase_gate_target() };
        FidelityReport::new(&target, fwd.final_operator(), &[0, 1]).unwrap()
    }

    /// Worst-case fidelity of a constant two-level drive of area `θ`, by the
    /// Rabi formula: |0⟩ amplitude `cos(θ/2)`, |1⟩ untouched, so
    /// `O = diag(−cos(θ/2), 1)` relative to the phase gate.
    fn rabi_worst_case(theta: f64) -> f64 {
        let a = -(theta / 2.0).cos();
        // min over p ∈ [0,1] of |p·a + (1 − p)| for real a.
        if a >= 0.0 {
            a.min(1.0)
        } else {
            0.0
        }
    }

    #[test]
    fn naive_pulse_at_ideal_point() {
        let p = naive_2pi_params(T24).unwrap();
        assert_eq!(p.coefficients[0], 1.0 / 12.0);
        let r = fidelity(&p, 1.0, 0.0, false, 256);
        assert!(1.0 - r.worst_case_fidelity <= 1e-10);
        let w = naive_2pi_pulse(T24, 16).unwrap();
        assert!(w.samples.iter().all(|s| s[0] == 1.0 / 12.0 && s[1..].iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn naive_pulse_under_rotation() {
        let p = naive_2pi_params(T24).unwrap();
        for gamma in [0.9, 0.95, 1.05] {
            let r = fidelity(&p, gamma, 0.0, false, 256);
            let expected = rabi_worst_case(gamma * std::f64::consts::TAU);
            assert!(r.worst_case_fidelity < 1.0);
            assert!((r.worst_case_fidelity - expected).abs() < 1e-9, "{gamma}: {} vs {expected}", r.worst_case_fidelity);
        }
    }

    #[test]
    fn naive_pulse_far_detuned() {
        let p = naive_2pi_params(T24).unwrap();
        let r = fidelity(&p, 1.0, 20.0, true, 4096);
        let err = 1.0 - r.worst_case_fidelity;
        assert!(err > 0.0 && err < 1e-4, "{err}");
    }

    #[test]
    fn sech_examples() {
        let mut spec = SechPulseSpec {
            peak_amplitude: 0.0,
            width: 0.7,
            chirp: 1.0,
            carrier_detuning: 0.0,
            phase_offset: 0.0,
            transition: Transition::Zero,
            start: 0.0,
            segment_duration: 10.0,
        };
        let w = sech_sequence(vec![spec], 20).unwrap();
        assert!(w.samples.iter().all(|s| s.iter().all(|v| *v == 0.0)));

        spec.peak_amplitude = 0.8;
        spec.transition = Transition::One;
        let w = sech_sequence(vec![spec], 20).unwrap();
        assert_eq!(w.samples[10], vec![0.0, 0.0, 0.8, 0.0]);

        let mut later = spec;
        later.start = 9.0;
        assert!(SechSequence::new(vec![spec, later]).is_err());
        later.start = 10.0;
        assert!(SechSequence::new(vec![spec, later]).is_ok());
        later.width = 0.0;
        assert!(SechSequence::new(vec![spec, later]).is_err());
    }

    #[test]
    fn sech_chirp_phase() {
        let spec = SechPulseSpec {
            peak_amplitude: 1.0,
            width: 0.5,
            chirp: 2.0,
            carrier_detuning: 0.1,
            phase_offset: 0.3,
            transition: Transition::Zero,
            start: 0.0,
            segment_duration: 8.0,
        };
        let t = 6.0f64;
        let x = 0.5 * (t - 4.0);
        let phase = 2.0 * x.cosh().ln() + 0.1 * t + 0.3;
        let (re, im) = spec.rabi(t);
        assert!((re - phase.cos() / x.cosh()).abs() < 1e-15);
        assert!((im - phase.sin() / x.cosh()).abs() < 1e-15);
    }

    #[test]
    fn default_sech_sequence_layout() {
        let s = default_sech_sequence(T24, &SechDefaults::default()).unwrap();
        assert_eq!(s.segments.len(), 4);
        assert!((s.duration - T24).abs() < 1e-12);
        let w = s.waveform(2048).unwrap();
        let peak = w
            .samples
            .iter()
            .map(|v| v[0].hypot(v[1]).max(v[2].hypot(v[3])))
            .fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sech_sequence_fidelity() {
        let s = default_sech_sequence(T24, &SechDefaults::default()).unwrap();
        let ideal = fidelity(&s, 1.0, 0.0, false, 4096);
        assert!(ideal.worst_case_fidelity >= 0.999, "{ideal:?}");
        for delta in [5.0, 8.0, 12.0, 20.0, 25.0] {
            for sign in [-1.0, 1.0] {
                let r = fidelity(&s, 1.0, sign * delta, true, 8192);
                assert!(1.0 - r.worst_case_fidelity <= 1e-5, "δ = {}: {r:?}", sign * delta);
            }
        }
    }

    #[test]
    fn landscape_single_cell_matches_report() {
        let model = reqc_model();
        let p = naive_2pi_params(T24).unwrap();
        let l = landscape(&model, &p, &TargetMap::reqc(), &[0.95], &[0.3], 128, Scheme::default()).unwrap();
        assert_eq!(l.cells.len(), 1);
        let direct = fidelity(&p, 0.95, 0.3, false, 128);
        assert_eq!(l.cells[0].report, direct);
    }

    #[test]
    fn naive_landscape_peaks_at_ideal_point() {
        let model = reqc_model();
        let p = naive_2pi_params(T24).unwrap();
        let gammas = [0.9, 0.95, 1.0];
        let l = landscape(&model, &p, &TargetMap::reqc(), &gammas, &[0.0], 256, Scheme::default()).unwrap();
        let f: Vec<f64> = l.cells.iter().map(|c| c.report.worst_case_fidelity).collect();
        assert!(f[0] < f[1] && f[1] < f[2]);
        assert!(1.0 - f[2] < 1e-10);
        for (c, g) in l.cells.iter().zip(gammas) {
            assert!((c.report.worst_case_fidelity - rabi_worst_case(g * std::f64::consts::TAU)).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_and_running_max() {
        let model = reqc_model();
        let p = naive_2pi_params(T24).unwrap();
        let deltas = linspace(-8.0, 8.0, 5);
        let l = landscape(&model, &p, &TargetMap::reqc(), &[1.0, 1.05], &deltas, 512, Scheme::default()).unwrap();
        let csv = l.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("gamma,delta,F,T"));
        let rows: Vec<Vec<f64>> = lines.map(|r| r.split(',').map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 10);
        for (row, cell) in rows.iter().zip(&l.cells) {
            assert_eq!(row[0], cell.gamma);
            let f = cell.report.worst_case_fidelity;
            assert!((row[2] - f).abs() <= 1e-11 * f.abs().max(1e-300));
        }

        let rm = l.running_max();
        for gi in 0..2 {
            // Non-increasing error moving outward on each side.
            let err = |di: usize| 1.0 - rm.cell(gi, di).report.worst_case_fidelity;
            assert!(err(0) <= err(1) && err(4) <= err(3));
            for di in 0..5 {
                assert!(err(di) >= 1.0 - l.cell(gi, di).report.worst_case_fidelity - 1e-15);
            }
        }
    }

    #[test]
    fn landscape_is_order_independent() {
        let model = reqc_model();
        let p = naive_2pi_params(T24).unwrap();
        let a = landscape(&model, &p, &TargetMap::reqc(), &[0.9, 1.1], &[-1.0, 1.0], 128, Scheme::default()).unwrap();
        let b = landscape(&model, &p, &TargetMap::reqc(), &[1.1, 0.9], &[1.0, -1.0], 128, Scheme::default()).unwrap();
        let mut ra: Vec<String> = a.to_csv().lines().skip(1).map(String::from).collect();
        let mut rb: Vec<String> = b.to_csv().lines().skip(1).map(String::from).collect();
        ra.sort();
        rb.sort();
        assert_eq!(ra, rb);
    }

    #[test]
    fn waveform_and_params_agree() {
        let p = naive_2pi_params(10.0).unwrap();
        let w = naive_2pi_pulse(10.0, 8).unwrap();
        assert_eq!(w, synthesize(&p, 8).unwrap());
    }
}
