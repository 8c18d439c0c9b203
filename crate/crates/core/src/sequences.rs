//! Builders for the EIT pulses and the full spin-echo sequence.
//!
//! Phase convention: the relative phase of a bichromatic pulse is carried on
//! the `|0⟩→|e⟩` component (`phase0`), `phase1` stays zero. With relative
//! phase θ the dark state is `(|0⟩ − e^{iθ}|1⟩)/√2`, whose Bloch vector is
//! `(−cos θ, −sin θ, 0)`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::dynamics::{PulseLabel, PulseSpec, Segment, SequenceSpec};
use crate::error::{Error, Result};

/// Which transition a nominal pulse area refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AreaCalibration {
    /// Area measured with the √2-enhanced bright-state coupling.
    #[default]
    Bright,
    /// Area measured with the single-transition Rabi frequency.
    Bare,
}

impl AreaCalibration {
    fn enhancement(self) -> f64 {
        match self {
            AreaCalibration::Bright => SQRT_2,
            AreaCalibration::Bare => 1.0,
        }
    }
}

/// Parameters of one echo sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoConfig {
    /// Storage time: from the start of the initialization pulse to the start
    /// of the readout pulse (s).
    pub tau: f64,
    pub init_duration: f64,
    pub rephase_duration: f64,
    pub readout_duration: f64,
    /// Fixed Rabi frequency for every pulse (rad/s). When unset each pulse is
    /// calibrated to its nominal area.
    pub rabi: Option<f64>,
    /// Readout Rabi frequency; defaults to the initialization Rabi frequency.
    pub readout_rabi: Option<f64>,
    pub init_area: f64,
    pub rephase_area: f64,
    pub calibration: AreaCalibration,
    /// Hyperfine splitting of the ground levels (Hz).
    pub splitting: f64,
    /// Relative phase of the initialization pulse: 0 gives the x-axis state,
    /// π/2 the y-axis state.
    pub init_phase_offset: f64,
    /// Extra relative phase of the rephasing pulse. Zero puts the rotation
    /// axis through the initialized state.
    pub rephase_phase_shift: f64,
    /// Set to false for a free-induction-decay control.
    pub include_rephase: bool,
    /// Largest output step during pulses (s).
    pub sample_dt: f64,
    pub refine: u32,
}

impl Default for EchoConfig {
    fn default() -> Self {
        Self {
            tau: 20e-6,
            init_duration: 2e-6,
            rephase_duration: 2e-6,
            readout_duration: 2e-6,
            rabi: None,
            readout_rabi: None,
            init_area: PI,
            rephase_area: 2.0 * PI,
            calibration: AreaCalibration::Bright,
            splitting: 10.2e6,
            init_phase_offset: 0.0,
            rephase_phase_shift: 0.0,
            include_rephase: true,
            sample_dt: 10e-9,
            refine: 1,
        }
    }
}

impl EchoConfig {
    pub fn with_tau(&self, tau: f64) -> Self {
        Self {
            tau,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("init_duration", self.init_duration),
            ("rephase_duration", self.rephase_duration),
            ("readout_duration", self.readout_duration),
            ("tau", self.tau),
            ("splitting", self.splitting),
            ("sample_dt", self.sample_dt),
            ("init_area", self.init_area),
            ("rephase_area", self.rephase_area),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "EchoConfig.{name} = {v} must be > 0"
                )));
            }
        }
        for (name, v) in [("rabi", self.rabi), ("readout_rabi", self.readout_rabi)] {
            if let Some(r) = v {
                if !(r.is_finite() && r > 0.0) {
                    return Err(Error::Validation(format!(
                        "EchoConfig.{name} = {r} must be > 0"
                    )));
                }
            }
        }
        if self.refine == 0 {
            return Err(Error::Validation("EchoConfig.refine must be >= 1".into()));
        }
        Ok(())
    }

    /// Rabi frequency giving `area` over `duration` under the calibration.
    fn calibrated_rabi(&self, area: f64, duration: f64) -> f64 {
        self.rabi
            .unwrap_or(area / (self.calibration.enhancement() * duration))
    }

    pub fn init_rabi(&self) -> f64 {
        self.calibrated_rabi(self.init_area, self.init_duration)
    }

    pub fn rephase_rabi(&self) -> f64 {
        self.calibrated_rabi(self.rephase_area, self.rephase_duration)
    }

    pub fn readout_rabi(&self) -> f64 {
        self.readout_rabi.unwrap_or_else(|| self.init_rabi())
    }

    /// Splitting as an angular frequency.
    pub fn splitting_angular(&self) -> f64 {
        2.0 * PI * self.splitting
    }
}

fn bichromatic(duration: f64, rabi: f64, relative_phase: f64, label: PulseLabel) -> PulseSpec {
    PulseSpec {
        duration,
        rabi0: rabi,
        rabi1: rabi,
        phase0: relative_phase,
        phase1: 0.0,
        label,
    }
}

/// Equal-amplitude bichromatic pulse; relative phase `init_phase_offset`,
/// area π on the bright transition by default. Leaves a mixed ground state
/// as `½ρ_e + ½ρ_D`.
pub fn make_init_pulse(cfg: &EchoConfig) -> PulseSpec {
    bichromatic(
        cfg.init_duration,
        cfg.init_rabi(),
        cfg.init_phase_offset,
        PulseLabel::InitPiHalf,
    )
}

/// Spin π rotation about the axis of the initialized state.
///
/// A bright-transition 2π pulse multiplies the bright component by −1 and
/// leaves the dark component alone, which is a π rotation about the dark
/// state's Bloch axis. Using the initialization phase puts that axis through
/// the initialized state, i.e. 90° away from the axis the initialization
/// pulse effectively rotated about, so the accumulated spin phase is
/// conjugated.
pub fn make_rephase_pulse(cfg: &EchoConfig) -> PulseSpec {
    bichromatic(
        cfg.rephase_duration,
        cfg.rephase_rabi(),
        cfg.init_phase_offset + cfg.rephase_phase_shift,
        PulseLabel::RephasePi,
    )
}

/// Single-colour pulse on `|0⟩→|e⟩`.
pub fn make_readout_pulse(cfg: &EchoConfig) -> PulseSpec {
    PulseSpec {
        duration: cfg.readout_duration,
        rabi0: cfg.readout_rabi(),
        rabi1: 0.0,
        phase0: 0.0,
        phase1: 0.0,
        label: PulseLabel::Readout,
    }
}

/// `[init, wait, rephase, wait, readout]` with the initialization starting at
/// t = 0, the rephasing pulse centred on τ/2 and the readout starting at τ.
/// Without the rephasing pulse the sequence is `[init, wait, readout]`.
pub fn make_echo_sequence(cfg: &EchoConfig) -> Result<SequenceSpec> {
    cfg.validate()?;
    let segments = if cfg.include_rephase {
        let first_wait = 0.5 * cfg.tau - 0.5 * cfg.rephase_duration - cfg.init_duration;
        let pulses = cfg.init_duration + cfg.rephase_duration + cfg.readout_duration;
        if first_wait < 0.0 || cfg.tau <= pulses {
            return Err(Error::Config(format!(
                "tau = {:.3e} s is too short for the pulse layout (needs > {:.3e} s)",
                cfg.tau,
                pulses.max(2.0 * cfg.init_duration + cfg.rephase_duration)
            )));
        }
        let second_wait = 0.5 * cfg.tau - 0.5 * cfg.rephase_duration;
        vec![
            Segment::Pulse(make_init_pulse(cfg)),
            Segment::Wait {
                duration: first_wait,
            },
            Segment::Pulse(make_rephase_pulse(cfg)),
            Segment::Wait {
                duration: second_wait,
            },
            Segment::Pulse(make_readout_pulse(cfg)),
        ]
    } else {
        if cfg.tau < cfg.init_duration {
            return Err(Error::Config(format!(
                "tau = {:.3e} s is shorter than the initialization pulse",
                cfg.tau
            )));
        }
        vec![
            Segment::Pulse(make_init_pulse(cfg)),
            Segment::Wait {
                duration: cfg.tau - cfg.init_duration,
            },
            Segment::Pulse(make_readout_pulse(cfg)),
        ]
    };
    let mut seq = SequenceSpec::new(segments, cfg.sample_dt);
    seq.refine = cfg.refine;
    Ok(seq)
}

/// The initialization pulse alone.
pub fn make_init_sequence(cfg: &EchoConfig) -> Result<SequenceSpec> {
    cfg.validate()?;
    let mut seq = SequenceSpec::new(vec![Segment::Pulse(make_init_pulse(cfg))], cfg.sample_dt);
    seq.refine = cfg.refine;
    Ok(seq)
}

/// Initialization immediately followed by the rephasing pulse.
pub fn make_init_rephase_sequence(cfg: &EchoConfig) -> Result<SequenceSpec> {
    cfg.validate()?;
    let mut seq = SequenceSpec::new(
        vec![
            Segment::Pulse(make_init_pulse(cfg)),
            Segment::Pulse(make_rephase_pulse(cfg)),
        ],
        cfg.sample_dt,
    );
    seq.refine = cfg.refine;
    Ok(seq)
}

/// One config per storage time, for decay-curve chains.
pub fn echo_chain(cfg: &EchoConfig, taus: &[f64]) -> Result<Vec<SequenceSpec>> {
    taus.iter()
        .map(|&t| make_echo_sequence(&cfg.with_tau(t)))
        .collect()
}

/// `count` evenly spaced storage times in `[start, stop]`.
pub fn linear_taus(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}
