//! Time propagation of a single member through pulses and free-evolution
//! gaps.
//!
//! Pulses are rectangular and integrated with classical fixed-step RK4.
//! Undriven gaps have a diagonal generator in the element basis and are
//! propagated in closed form, which keeps millisecond storage times cheap
//! next to nanosecond integration steps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambda::{LambdaParams, Liouvillian};
use crate::qstate::{DensityMatrix3, Level, Matrix3c, C64};

/// Step-size bounds for pulse integration: `dt ≤ duration / MIN_STEPS_PER_PULSE`
/// and `dt ≤ STEP_RATE_PRODUCT / max_rate`.
pub const MIN_STEPS_PER_PULSE: f64 = 20.0;
pub const STEP_RATE_PRODUCT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseLabel {
    InitPiHalf,
    RephasePi,
    Readout,
    Custom,
}

/// A rectangular bichromatic (or single-colour) pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Seconds.
    pub duration: f64,
    pub rabi0: f64,
    pub rabi1: f64,
    pub phase0: f64,
    pub phase1: f64,
    pub label: PulseLabel,
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Validation(format!(
                "pulse duration {} must be > 0",
                self.duration
            )));
        }
        if !(self.rabi0 >= 0.0 && self.rabi1 >= 0.0)
            || !self.rabi0.is_finite()
            || !self.rabi1.is_finite()
        {
            return Err(Error::Validation(format!(
                "pulse Rabi frequencies ({}, {}) must be finite and >= 0",
                self.rabi0, self.rabi1
            )));
        }
        Ok(())
    }

    /// Member parameters with this pulse's drive fields substituted.
    pub fn apply_to(&self, p: &LambdaParams) -> LambdaParams {
        LambdaParams {
            rabi0: self.rabi0,
            rabi1: self.rabi1,
            phase0: self.phase0,
            phase1: self.phase1,
            ..*p
        }
    }

    pub fn bandwidth(&self) -> f64 {
        bandwidth(self)
    }
}

/// Spectral width addressed by a rectangular pulse, `1/(π·t_dur)` in Hz.
pub fn bandwidth(pulse: &PulseSpec) -> f64 {
    1.0 / (std::f64::consts::PI * pulse.duration)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Segment {
    Pulse(PulseSpec),
    Wait { duration: f64 },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match self {
            Segment::Pulse(p) => p.duration,
            Segment::Wait { duration } => *duration,
        }
    }
}

/// An ordered list of pulses and waits plus the output grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub segments: Vec<Segment>,
    /// Largest output (and integration) step during pulses, seconds.
    pub sample_dt: f64,
    /// Interior output points per wait segment; the end point is always
    /// recorded.
    pub wait_samples: usize,
    /// Integration substeps per output step during pulses. Raising this
    /// refines the integrator without moving the output grid.
    pub refine: u32,
}

impl SequenceSpec {
    pub fn new(segments: Vec<Segment>, sample_dt: f64) -> Self {
        Self {
            segments,
            sample_dt,
            wait_samples: 16,
            refine: 1,
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Validation("sequence has no segments".into()));
        }
        if !(self.sample_dt.is_finite() && self.sample_dt > 0.0) {
            return Err(Error::Validation(format!(
                "sample_dt {} must be > 0",
                self.sample_dt
            )));
        }
        if self.refine == 0 {
            return Err(Error::Validation("refine must be >= 1".into()));
        }
        for (k, seg) in self.segments.iter().enumerate() {
            match seg {
                Segment::Pulse(p) => {
                    p.validate()?;
                    if p.label == PulseLabel::Readout && k + 1 != self.segments.len() {
                        return Err(Error::Validation(
                            "readout pulse must be the last segment".into(),
                        ));
                    }
                }
                Segment::Wait { duration } => {
                    if !(duration.is_finite() && *duration >= 0.0) {
                        return Err(Error::Validation(format!(
                            "wait duration {duration} must be >= 0"
                        )));
                    }
                }
            }
        }
        if self.total_duration() <= 0.0 {
            return Err(Error::Validation(
                "sequence total duration must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Start and end times of every segment.
    pub fn segment_times(&self) -> Vec<(f64, f64)> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.duration();
                (start, t)
            })
            .collect()
    }
}

/// Where a segment landed in a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpan {
    /// `None` for waits.
    pub label: Option<PulseLabel>,
    /// Index of the first sample (shared with the previous segment's end).
    pub start_index: usize,
    /// Index of the last sample.
    pub end_index: usize,
    pub start_time: f64,
    pub end_time: f64,
}

/// Per-time record of the quantities plotted and exported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observables {
    pub populations: [f64; 3],
    pub rho01: C64,
    pub rho0e: C64,
    pub rho1e: C64,
}

impl Observables {
    pub fn of(rho: &DensityMatrix3) -> Self {
        Self {
            populations: rho.populations(),
            rho01: rho.element(Level::Ground0, Level::Ground1),
            rho0e: rho.element(Level::Ground0, Level::Excited),
            rho1e: rho.element(Level::Ground1, Level::Excited),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix3>,
    pub spans: Vec<SegmentSpan>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &DensityMatrix3 {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn observables(&self) -> Vec<Observables> {
        self.states.iter().map(Observables::of).collect()
    }

    /// First span carrying the given pulse label.
    pub fn span(&self, label: PulseLabel) -> Option<&SegmentSpan> {
        self.spans.iter().find(|s| s.label == Some(label))
    }

    /// State at the end of the first pulse with this label.
    pub fn state_after(&self, label: PulseLabel) -> Option<&DensityMatrix3> {
        self.span(label).map(|s| &self.states[s.end_index])
    }

    /// State at the start of the first pulse with this label.
    pub fn state_before(&self, label: PulseLabel) -> Option<&DensityMatrix3> {
        self.span(label).map(|s| &self.states[s.start_index])
    }

    /// Times and states inside `[start, end)` of a span, i.e. a uniform
    /// grid for pulse spans.
    pub fn window(&self, span: &SegmentSpan) -> (&[f64], &[DensityMatrix3]) {
        (
            &self.times[span.start_index..span.end_index],
            &self.states[span.start_index..span.end_index],
        )
    }

    /// CSV with columns `t, p0, p1, pe, re/im of ρ01, ρ0e, ρ1e`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "t", "p0", "p1", "pe", "rho01_re", "rho01_im", "rho0e_re", "rho0e_im", "rho1e_re",
            "rho1e_im",
        ])?;
        for (t, rho) in self.times.iter().zip(&self.states) {
            let o = Observables::of(rho);
            wr.write_record(
                [
                    *t,
                    o.populations[0],
                    o.populations[1],
                    o.populations[2],
                    o.rho01.re,
                    o.rho01.im,
                    o.rho0e.re,
                    o.rho0e.im,
                    o.rho1e.re,
                    o.rho1e.im,
                ]
                .iter()
                .map(|v| format!("{v:e}")),
            )?;
        }
        wr.flush()?;
        Ok(())
    }

    /// CSV of the ground-block Bloch vector `t, x, y, z`.
    pub fn write_bloch_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "x", "y", "z"])?;
        for (t, rho) in self.times.iter().zip(&self.states) {
            let [x, y, z] = rho.ground_block().bloch_vector();
            wr.write_record([*t, x, y, z].iter().map(|v| format!("{v:e}")))?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn rk4_step(l: &Liouvillian, rho: &Matrix3c, h: f64) -> Matrix3c {
    let k1 = l.apply(rho);
    let k2 = l.apply(&(rho + k1.scale(0.5 * h)));
    let k3 = l.apply(&(rho + k2.scale(0.5 * h)));
    let k4 = l.apply(&(rho + k3.scale(h)));
    let next = rho + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0);
    // the exact flow is Hermitian; drop rounding drift
    (next + next.adjoint()).scale(0.5)
}

/// Largest admissible step for a pulse under `p`.
pub fn max_step(p: &LambdaParams, pulse: &PulseSpec) -> f64 {
    let driven = pulse.apply_to(p);
    let rate = driven.max_rate();
    let by_rate = if rate > 0.0 {
        STEP_RATE_PRODUCT / rate
    } else {
        f64::INFINITY
    };
    by_rate.min(pulse.duration / MIN_STEPS_PER_PULSE)
}

fn check_step(p: &LambdaParams, pulse: &PulseSpec, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("time step {dt} must be > 0")));
    }
    let bound = max_step(p, pulse);
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "time step {dt:.3e} s exceeds the bound {bound:.3e} s for this pulse \
             (duration/{MIN_STEPS_PER_PULSE} and {STEP_RATE_PRODUCT}/max rate)"
        )));
    }
    Ok(())
}

/// `flip_at` is the substep after which the Zeeman sign reverses, if any.
#[allow(clippy::too_many_arguments)]
fn integrate_pulse(
    rho0: &DensityMatrix3,
    p: &LambdaParams,
    pulse: &PulseSpec,
    outputs: usize,
    refine: u32,
    zeeman_sign: f64,
    flip_at: Option<usize>,
    mut record: impl FnMut(f64, DensityMatrix3),
) {
    let driven = pulse.apply_to(p);
    let before = Liouvillian::with_zeeman_sign(&driven, zeeman_sign);
    let after = Liouvillian::with_zeeman_sign(&driven, -zeeman_sign);
    let substeps = outputs * refine as usize;
    let h = pulse.duration / substeps as f64;
    let mut rho = *rho0.matrix();
    for k in 1..=substeps {
        let l = match flip_at {
            Some(f) if k > f => &after,
            _ => &before,
        };
        rho = rk4_step(l, &rho, h);
        if k % refine as usize == 0 {
            let t = pulse.duration * (k as f64 / substeps as f64);
            record(t, DensityMatrix3::from_matrix_unchecked(rho));
        }
    }
}

/// Propagates `rho0` through one pulse with step `dt` (rounded down so the
/// pulse holds an integer number of steps). Fails rather than coarse-stepping
/// when `dt` violates the stability bound.
pub fn propagate(
    rho0: &DensityMatrix3,
    p: &LambdaParams,
    pulse: &PulseSpec,
    dt: f64,
) -> Result<Trajectory> {
    p.validate()?;
    pulse.validate()?;
    check_step(p, pulse, dt)?;
    let steps = (pulse.duration / dt - 1e-9).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(*rho0);
    integrate_pulse(rho0, p, pulse, steps, 1, 1.0, None, |t, s| {
        times.push(t);
        states.push(s);
    });
    Ok(Trajectory {
        spans: vec![SegmentSpan {
            label: Some(pulse.label),
            start_index: 0,
            end_index: steps,
            start_time: 0.0,
            end_time: pulse.duration,
        }],
        times,
        states,
    })
}

/// Closed-form propagation of the undriven master equation over `t`.
pub fn free_evolution(
    rho: &DensityMatrix3,
    p: &LambdaParams,
    t: f64,
    zeeman_sign: f64,
) -> DensityMatrix3 {
    let m = rho.matrix();
    let spin = p.delta_spin + zeeman_sign * p.zeeman_shift;
    let gamma = p.gamma_opt_decay;
    let decay = (-gamma * t).exp();
    let h0 = 0.5 * spin;
    let h1 = -0.5 * spin;
    let he = p.delta_opt;
    let opt_rate = 0.5 * gamma + p.gamma_opt_deph + 0.25 * p.gamma_spin_deph;

    let mut out = Matrix3c::zeros();
    let ree = m[(2, 2)].re;
    out[(2, 2)] = C64::new(ree * decay, 0.0);
    out[(0, 0)] = C64::new(m[(0, 0)].re + p.branch0 * ree * (1.0 - decay), 0.0);
    out[(1, 1)] = C64::new(m[(1, 1)].re + (1.0 - p.branch0) * ree * (1.0 - decay), 0.0);

    let evolve = |z: C64, freq: f64, rate: f64| z * C64::from_polar((-rate * t).exp(), -freq * t);
    out[(0, 1)] = evolve(m[(0, 1)], h0 - h1, p.gamma_spin_deph);
    out[(0, 2)] = evolve(m[(0, 2)], h0 - he, opt_rate);
    out[(1, 2)] = evolve(m[(1, 2)], h1 - he, opt_rate);
    for (r, c) in [(0, 1), (0, 2), (1, 2)] {
        out[(c, r)] = out[(r, c)].conj();
    }
    DensityMatrix3::from_matrix_unchecked(out)
}

/// Output steps used for a pulse segment in a sequence.
fn pulse_outputs(p: &LambdaParams, pulse: &PulseSpec, sample_dt: f64) -> usize {
    let dt = max_step(p, pulse).min(sample_dt);
    (pulse.duration / dt - 1e-9).ceil().max(1.0) as usize
}

/// Runs a whole sequence. State is continuous across segment boundaries;
/// waits carry no drive. The Zeeman term changes sign at the centre of every
/// rephasing pulse, the effective instant of a finite rotation; those pulses
/// get an even number of output steps so the centre is on the grid.
pub fn run_sequence(
    rho0: &DensityMatrix3,
    p: &LambdaParams,
    seq: &SequenceSpec,
) -> Result<Trajectory> {
    p.validate()?;
    seq.validate()?;
    rho0.validate()?;

    let mut times = vec![0.0];
    let mut states = vec![*rho0];
    let mut spans = Vec::with_capacity(seq.segments.len());
    let mut t0 = 0.0;
    let mut zeeman_sign = 1.0;

    for seg in &seq.segments {
        let start_index = times.len() - 1;
        let current = *states.last().expect("non-empty");
        match seg {
            Segment::Pulse(pulse) => {
                let mut outputs = pulse_outputs(p, pulse, seq.sample_dt);
                let rephase = pulse.label == PulseLabel::RephasePi;
                if rephase {
                    outputs += outputs % 2;
                }
                let flip_at = rephase.then_some(outputs * seq.refine as usize / 2);
                integrate_pulse(
                    &current,
                    p,
                    pulse,
                    outputs,
                    seq.refine,
                    zeeman_sign,
                    flip_at,
                    |t, s| {
                        times.push(t0 + t);
                        states.push(s);
                    },
                );
                if rephase {
                    zeeman_sign = -zeeman_sign;
                }
            }
            Segment::Wait { duration } => {
                if *duration > 0.0 {
                    let n = seq.wait_samples + 1;
                    for k in 1..=n {
                        let t = duration * (k as f64 / n as f64);
                        times.push(t0 + t);
                        states.push(free_evolution(&current, p, t, zeeman_sign));
                    }
                }
            }
        }
        let end_time = t0 + seg.duration();
        spans.push(SegmentSpan {
            label: match seg {
                Segment::Pulse(pulse) => Some(pulse.label),
                Segment::Wait { .. } => None,
            },
            start_index,
            end_index: times.len() - 1,
            start_time: t0,
            end_time,
        });
        t0 = end_time;
    }

    Ok(Trajectory {
        times,
        states,
        spans,
    })
}
