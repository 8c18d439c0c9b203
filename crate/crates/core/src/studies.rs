//! Study drivers: magnetic-field sweep and compensation, temperature scan,
//! and the optical-T₂ scaling study.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::PulseLabel;
use crate::ensemble::Physics;
use crate::error::{Error, Result};
use crate::qstate::dark_ket;
use crate::readout::{
    assemble_decay_curve, echo_amplitude, fit_decay, DecayCurve, FitResult, ReadoutMode,
};
use crate::sequences::{make_echo_sequence, EchoConfig};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
/// Returns the abscissa, value and evaluation count.
pub fn golden_section_min(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64, usize)> {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut evals = 2;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
        evals += 1;
    }
    Ok(if fc < fd {
        (c, fc, evals)
    } else {
        (d, fd, evals)
    })
}

// ---------------------------------------------------------------------------
// Magnetic field

/// Splitting of the hyperfine branches in a magnetic field, using only the
/// strongest g-factor and the net field magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    /// Hz/T.
    pub g_factor: f64,
    /// Ambient field (T).
    pub field: [f64; 3],
    /// Coil field added to the ambient field (T).
    pub compensation: [f64; 3],
}

impl Default for FieldModel {
    fn default() -> Self {
        Self {
            g_factor: 12e3 / 100e-6,
            field: [0.0; 3],
            compensation: [0.0; 3],
        }
    }
}

impl FieldModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_factor.is_finite() && self.g_factor > 0.0) {
            return Err(Error::Validation(format!(
                "g_factor = {} must be > 0",
                self.g_factor
            )));
        }
        if self
            .field
            .iter()
            .chain(&self.compensation)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Validation("field components must be finite".into()));
        }
        Ok(())
    }

    pub fn net_field(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.field[k] + self.compensation[k])
    }

    pub fn with_compensation(&self, compensation: [f64; 3]) -> Self {
        Self {
            compensation,
            ..*self
        }
    }
}

/// `g·|B + B_comp|` in Hz.
pub fn splitting_from_field(m: &FieldModel) -> f64 {
    let b = m.net_field();
    m.g_factor * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt()
}

/// `physics` with its Zeeman branches replaced by ±δf/2.
fn split_physics(physics: &Physics, splitting: f64) -> Physics {
    Physics {
        ensemble: physics.ensemble.clone().with_split(splitting),
        ..physics.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSweepPoint {
    /// Vertical coil field (T).
    pub coil_field: f64,
    /// Hz.
    pub splitting: f64,
    pub curve: DecayCurve,
    pub fit: Option<FitResult>,
    pub fit_error: Option<String>,
    /// Storage time of the first beat minimum, refined by simulation.
    pub beat_minimum: Option<f64>,
}

/// First interior local minimum of the curve, refined between its grid
/// neighbours by golden-section search on the simulated echo.
pub fn find_beat_minimum(
    curve: &DecayCurve,
    cfg: &EchoConfig,
    physics: &Physics,
    mode: ReadoutMode,
) -> Result<Option<f64>> {
    let a = &curve.amplitudes;
    let Some(k) = (1..a.len().saturating_sub(1)).find(|&k| a[k] < a[k - 1] && a[k] <= a[k + 1])
    else {
        return Ok(None);
    };
    let (lo, hi) = (curve.taus[k - 1], curve.taus[k + 1]);
    let tol = 1e-4 * (hi - lo);
    let (tau, _, _) = golden_section_min(
        |t| echo_amplitude(&cfg.with_tau(t), physics, mode),
        lo,
        hi,
        tol,
    )?;
    Ok(Some(tau))
}

/// One decay curve per vertical coil setting. Each setting replaces the
/// vertical compensation component; the splitting follows from the net
/// field.
pub fn field_sweep(
    coil_fields: &[f64],
    model: &FieldModel,
    cfg: &EchoConfig,
    taus: &[f64],
    physics: &Physics,
    mode: ReadoutMode,
) -> Result<Vec<FieldSweepPoint>> {
    model.validate()?;
    coil_fields
        .par_iter()
        .map(|&coil| {
            let mut comp = model.compensation;
            comp[2] = coil;
            let splitting = splitting_from_field(&model.with_compensation(comp));
            let ph = split_physics(physics, splitting);
            let curve = assemble_decay_curve(cfg, taus, &ph, mode)?;
            let (fit, fit_error) = match fit_decay(&curve) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let beat_minimum = find_beat_minimum(&curve, cfg, &ph, mode)?;
            Ok(FieldSweepPoint {
                coil_field: coil,
                splitting,
                curve,
                fit,
                fit_error,
                beat_minimum,
            })
        })
        .collect()
}

/// Long-format grid: one row per (coil field, τ).
pub fn write_field_grid_csv<W: Write>(w: W, points: &[FieldSweepPoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["coil_field_T", "splitting_Hz", "tau_s", "amplitude"])?;
    for p in points {
        for (t, a) in p.curve.taus.iter().zip(&p.curve.amplitudes) {
            wr.write_record([
                p.coil_field.to_string(),
                p.splitting.to_string(),
                t.to_string(),
                a.to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per coil field with the fit summary.
pub fn write_field_summary_csv<W: Write>(w: W, points: &[FieldSweepPoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "coil_field_T",
        "splitting_Hz",
        "t2_s",
        "t2_ci95_s",
        "amplitude",
        "offset",
        "reduced_chi2",
        "residual_autocorrelation",
        "beat_minimum_s",
        "fit_error",
    ])?;
    for p in points {
        let f = p.fit.as_ref();
        wr.write_record([
            p.coil_field.to_string(),
            p.splitting.to_string(),
            opt(f.map(|f| f.t2)),
            opt(f.map(|f| f.ci95[1])),
            opt(f.map(|f| f.amplitude)),
            opt(f.map(|f| f.offset)),
            opt(f.map(|f| f.reduced_chi2)),
            opt(f.map(|f| f.residual_autocorrelation)),
            opt(p.beat_minimum),
            p.fit_error.clone().unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationSettings {
    /// Storage time at which the echo is maximized (s). Short enough that
    /// the two-branch beat stays on its first quarter period over the search
    /// range, so the echo falls monotonically with |B|.
    pub probe_tau: f64,
    /// Half-width of the coarse scan per axis (T).
    pub range: f64,
    pub coarse_step: f64,
    /// Final bracket width of the refinement (T).
    pub tolerance: f64,
    pub sweeps: usize,
}

impl Default for CompensationSettings {
    fn default() -> Self {
        Self {
            probe_tau: 20e-6,
            range: 150e-6,
            coarse_step: 5e-6,
            tolerance: 0.05e-6,
            sweeps: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompensationResult {
    pub compensation: [f64; 3],
    pub initial_objective: f64,
    pub objective: f64,
    pub evaluations: usize,
    /// Set when the search did not improve on the starting point.
    pub warning: Option<String>,
}

/// Coordinate search over the three coil components maximizing the echo at
/// `probe_tau`: a coarse scan over `±range` around the current value, then a
/// golden-section refinement between the neighbours of the best scan point.
pub fn compensation_search(
    model: &FieldModel,
    cfg: &EchoConfig,
    physics: &Physics,
    settings: &CompensationSettings,
) -> Result<CompensationResult> {
    model.validate()?;
    if !(settings.coarse_step > 0.0 && settings.range > 0.0 && settings.tolerance > 0.0) {
        return Err(Error::Validation(
            "compensation settings must be positive".into(),
        ));
    }
    let probe = cfg.with_tau(settings.probe_tau);
    make_echo_sequence(&probe)?;
    let echo = |comp: [f64; 3]| -> Result<f64> {
        let splitting = splitting_from_field(&model.with_compensation(comp));
        echo_amplitude(
            &probe,
            &split_physics(physics, splitting),
            ReadoutMode::Proxy,
        )
    };
    let mut comp = model.compensation;
    let initial_objective = echo(comp)?;
    let mut best = initial_objective;
    let mut evaluations = 1;
    let n = (settings.range / settings.coarse_step).round() as i64;
    for _ in 0..settings.sweeps.max(1) {
        for axis in 0..3 {
            let centre = comp[axis];
            let grid: Vec<f64> = (-n..=n)
                .map(|k| centre + k as f64 * settings.coarse_step)
                .collect();
            let values: Vec<f64> = grid
                .par_iter()
                .map(|&x| {
                    let mut c = comp;
                    c[axis] = x;
                    echo(c)
                })
                .collect::<Result<_>>()?;
            evaluations += grid.len();
            let k = values
                .iter()
                .enumerate()
                .fold(0, |bk, (i, v)| if *v > values[bk] { i } else { bk });
            let lo = grid[k.saturating_sub(1)];
            let hi = grid[(k + 1).min(grid.len() - 1)];
            let (x, neg, evals) = golden_section_min(
                |x| {
                    let mut c = comp;
                    c[axis] = x;
                    echo(c).map(|v| -v)
                },
                lo,
                hi,
                settings.tolerance,
            )?;
            evaluations += evals;
            let (x, value) = if -neg >= values[k] {
                (x, -neg)
            } else {
                (grid[k], values[k])
            };
            if value >= best {
                comp[axis] = x;
                best = value;
            }
        }
    }
    let warning = (best <= initial_objective).then(|| {
        format!(
            "search did not improve the echo at {:.1} us (objective {:.6})",
            settings.probe_tau * 1e6,
            initial_objective
        )
    });
    Ok(CompensationResult {
        compensation: comp,
        initial_objective,
        objective: best,
        evaluations,
        warning,
    })
}

// ---------------------------------------------------------------------------
// Temperature

/// Two-phonon broadening: `T₂,opt(T) = T₂,ref·(T_ref/T)ⁿ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub t2_opt_ref: f64,
    pub temperature_ref: f64,
    pub exponent: f64,
}

impl Default for TemperatureModel {
    fn default() -> Self {
        Self {
            t2_opt_ref: 10e-6,
            temperature_ref: 6.0,
            exponent: 7.0,
        }
    }
}

impl TemperatureModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t2_opt_ref", self.t2_opt_ref),
            ("temperature_ref", self.temperature_ref),
            ("exponent", self.exponent),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "TemperatureModel.{name} = {v} must be > 0"
                )));
            }
        }
        Ok(())
    }

    pub fn t2_opt(&self, temperature: f64) -> f64 {
        self.t2_opt_ref * (self.temperature_ref / temperature).powf(self.exponent)
    }

    /// Homogeneous linewidth at `hot` relative to `cold`.
    pub fn linewidth_ratio(&self, hot: f64, cold: f64) -> f64 {
        (hot / cold).powf(self.exponent)
    }

    /// Temperature at which the optical T₂ equals `duration`.
    pub fn crossing_temperature(&self, duration: f64) -> f64 {
        self.temperature_ref * (self.t2_opt_ref / duration).powf(1.0 / self.exponent)
    }

    /// `physics` with the optical dephasing set for `temperature`. The
    /// optional excitation-induced spin dephasing adds `isd_coupling` times
    /// the optical dephasing rate to the spin dephasing.
    pub fn physics_at(&self, physics: &Physics, temperature: f64, isd_coupling: f64) -> Physics {
        let mut params = physics.params;
        let deph = (1.0 / self.t2_opt(temperature) - 0.5 * params.gamma_opt_decay).max(0.0);
        params.gamma_opt_deph = deph;
        params = params.with_excitation_dephasing(isd_coupling * deph);
        Physics {
            params,
            ..physics.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperaturePoint {
    pub temperature: f64,
    pub t2_opt: f64,
    pub curve: DecayCurve,
    pub fit: Option<FitResult>,
    pub fit_error: Option<String>,
    /// First-τ echo relative to the same echo at the reference temperature.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperatureScan {
    pub points: Vec<TemperaturePoint>,
    /// Temperature where the amplitude falls to half its low-temperature
    /// plateau, linearly interpolated; `None` if it never does.
    pub knee: Option<f64>,
    /// Temperature where the optical T₂ equals the initialization pulse.
    pub crossing: f64,
}

/// Fraction of the plateau that defines the knee.
pub const KNEE_FRACTION: f64 = 0.5;

/// Half-plateau crossing of `amplitudes` over ascending `temperatures`; the
/// plateau is the amplitude at the lowest temperature.
pub fn find_knee(temperatures: &[f64], amplitudes: &[f64]) -> Option<f64> {
    let plateau = *amplitudes.first()?;
    let level = KNEE_FRACTION * plateau;
    (1..amplitudes.len())
        .find(|&k| amplitudes[k] < level)
        .map(|k| {
            let (t0, t1) = (temperatures[k - 1], temperatures[k]);
            let (a0, a1) = (amplitudes[k - 1], amplitudes[k]);
            t0 + (t1 - t0) * (a0 - level) / (a0 - a1)
        })
}

pub fn temperature_scan(
    temperatures: &[f64],
    tm: &TemperatureModel,
    cfg: &EchoConfig,
    taus: &[f64],
    physics: &Physics,
    mode: ReadoutMode,
    isd_coupling: f64,
) -> Result<TemperatureScan> {
    tm.validate()?;
    if temperatures.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Validation("temperatures must be > 0".into()));
    }
    if temperatures.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation(
            "temperatures must be strictly increasing".into(),
        ));
    }
    if !(isd_coupling.is_finite() && isd_coupling >= 0.0) {
        return Err(Error::Validation("isd_coupling must be >= 0".into()));
    }
    let first = cfg.with_tau(
        *taus
            .first()
            .ok_or_else(|| Error::Validation("no taus".into()))?,
    );
    let baseline = echo_amplitude(
        &first,
        &tm.physics_at(physics, tm.temperature_ref, isd_coupling),
        mode,
    )?;
    if baseline <= 0.0 {
        return Err(Error::Degenerate(
            "no echo at the reference temperature".into(),
        ));
    }
    let points = temperatures
        .par_iter()
        .map(|&t| {
            let ph = tm.physics_at(physics, t, isd_coupling);
            let curve = assemble_decay_curve(cfg, taus, &ph, mode)?;
            let (fit, fit_error) = match fit_decay(&curve) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Ok(TemperaturePoint {
                temperature: t,
                t2_opt: tm.t2_opt(t),
                amplitude: curve.amplitudes[0] / baseline,
                curve,
                fit,
                fit_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let amps: Vec<f64> = points.iter().map(|p| p.amplitude).collect();
    Ok(TemperatureScan {
        knee: find_knee(temperatures, &amps),
        crossing: tm.crossing_temperature(cfg.init_duration),
        points,
    })
}

pub fn write_temperature_csv<W: Write>(w: W, scan: &TemperatureScan) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "temperature_K",
        "t2_opt_s",
        "t2_s",
        "t2_ci95_s",
        "amplitude",
        "fit_error",
    ])?;
    for p in &scan.points {
        let f = p.fit.as_ref();
        wr.write_record([
            p.temperature.to_string(),
            p.t2_opt.to_string(),
            opt(f.map(|f| f.t2)),
            opt(f.map(|f| f.ci95[1])),
            p.amplitude.to_string(),
            p.fit_error.clone().unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Optical-T₂ scaling

/// Constant-intensity scaling `T_π = T_π,ref·√(T₂/T₂,ref)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingModel {
    /// Available intensity (W/m²); documents the budget behind the anchor.
    pub intensity_budget: f64,
    pub t_pi_ref: f64,
    pub t2_ref: f64,
    /// Storage time, held fixed so only the optical coherence varies.
    pub storage: f64,
    /// Output samples per T_π.
    pub samples_per_pulse: f64,
}

impl Default for ScalingModel {
    fn default() -> Self {
        let spot = std::f64::consts::PI * (35e-6f64).powi(2);
        Self {
            intensity_budget: 0.1 / spot,
            t_pi_ref: 150e-9,
            t2_ref: 100e-6,
            storage: 1.5e-6,
            samples_per_pulse: 50.0,
        }
    }
}

impl ScalingModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("intensity_budget", self.intensity_budget),
            ("t_pi_ref", self.t_pi_ref),
            ("t2_ref", self.t2_ref),
            ("storage", self.storage),
            ("samples_per_pulse", self.samples_per_pulse),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "ScalingModel.{name} = {v} must be > 0"
                )));
            }
        }
        Ok(())
    }

    pub fn pi_duration(&self, t2_opt: f64) -> f64 {
        self.t_pi_ref * (t2_opt / self.t2_ref).sqrt()
    }

    /// Echo configuration at `t2_opt`: π-area initialization of length T_π,
    /// rephasing at the same intensity (so twice as long).
    pub fn config_at(&self, cfg: &EchoConfig, t2_opt: f64) -> EchoConfig {
        let t_pi = self.pi_duration(t2_opt);
        EchoConfig {
            tau: self.storage,
            init_duration: t_pi,
            rephase_duration: 2.0 * t_pi,
            readout_duration: t_pi,
            rabi: None,
            readout_rabi: None,
            sample_dt: t_pi / self.samples_per_pulse,
            ..cfg.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub t2_opt: f64,
    pub t_pi: f64,
    /// Ground state before readout against the dark target.
    pub fidelity: f64,
    /// `|ρ₀₁|` before readout.
    pub coherence: f64,
}

fn scaling_point(
    sm: &ScalingModel,
    cfg: &EchoConfig,
    physics: &Physics,
    t2: f64,
    closed: bool,
) -> Result<ScalingPoint> {
    let c = sm.config_at(cfg, t2);
    let mut ph = physics.clone();
    if closed {
        ph.params = crate::lambda::LambdaParams::closed();
    } else {
        ph.params.gamma_opt_deph = (1.0 / t2 - 0.5 * ph.params.gamma_opt_decay).max(0.0);
    }
    let tr = ph.run(&make_echo_sequence(&c)?)?;
    let before = tr
        .state_before(PulseLabel::Readout)
        .ok_or_else(|| Error::Config("sequence has no readout".into()))?;
    Ok(ScalingPoint {
        t2_opt: t2,
        t_pi: c.init_duration,
        fidelity: before
            .ground_block()
            .fidelity(&dark_ket(c.init_phase_offset))?,
        coherence: before.ground_coherence().norm(),
    })
}

/// Optical dephasing is set per point so the optical coherence time equals
/// `t2_opt`; the population decay stays at its base value.
pub fn scaling_study(
    t2_values: &[f64],
    sm: &ScalingModel,
    cfg: &EchoConfig,
    physics: &Physics,
) -> Result<Vec<ScalingPoint>> {
    sm.validate()?;
    if t2_values.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Validation("optical T2 values must be > 0".into()));
    }
    t2_values
        .par_iter()
        .map(|&t2| scaling_point(sm, cfg, physics, t2, false))
        .collect()
}

/// Same sequence with no loss; the ceiling the scaling curve approaches.
pub fn closed_system_fidelity(
    sm: &ScalingModel,
    cfg: &EchoConfig,
    physics: &Physics,
) -> Result<f64> {
    Ok(scaling_point(sm, cfg, physics, sm.t2_ref, true)?.fidelity)
}

pub fn write_scaling_csv<W: Write>(w: W, points: &[ScalingPoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in points {
        wr.serialize(p)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::EnsembleSpec;
    use crate::lambda::LambdaParams;
    use approx::assert_abs_diff_eq;

    #[test]
    fn splitting_examples() {
        let m = |z: f64| FieldModel {
            field: [0.0, 0.0, z],
            ..FieldModel::default()
        };
        assert_abs_diff_eq!(splitting_from_field(&m(50e-6)), 6e3, epsilon = 1e-9);
        assert_abs_diff_eq!(splitting_from_field(&m(100e-6)), 12e3, epsilon = 1e-9);
        assert_eq!(splitting_from_field(&m(0.0)), 0.0);
        let cancelled = m(50e-6).with_compensation([0.0, 0.0, -50e-6]);
        assert_eq!(splitting_from_field(&cancelled), 0.0);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx, _) =
            golden_section_min(|x| Ok((x - 0.3).powi(2) + 1.0), -1.0, 2.0, 1e-9).unwrap();
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(fx, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn temperature_law_is_exact() {
        let tm = TemperatureModel::default();
        assert_abs_diff_eq!(
            tm.linewidth_ratio(11.0, 6.0),
            (11.0f64 / 6.0).powi(7),
            epsilon = 1e-9
        );
        assert!((tm.t2_opt(6.0) / tm.t2_opt(11.0) / 69.9 - 1.0).abs() < 0.01);
        assert_abs_diff_eq!(
            tm.t2_opt(tm.crossing_temperature(2e-6)),
            2e-6,
            epsilon = 1e-18
        );
    }

    #[test]
    fn knee_interpolation() {
        let t = [4.0, 5.0, 6.0, 7.0];
        let a = [1.0, 0.9, 0.6, 0.2];
        assert_abs_diff_eq!(find_knee(&t, &a).unwrap(), 6.25, epsilon = 1e-12);
        assert_eq!(find_knee(&t, &[1.0, 1.0, 0.9, 0.8]), None);
    }

    #[test]
    fn scaling_pi_duration_follows_square_root() {
        let sm = ScalingModel::default();
        assert_abs_diff_eq!(sm.pi_duration(sm.t2_ref), sm.t_pi_ref, epsilon = 1e-20);
        assert_abs_diff_eq!(
            sm.pi_duration(sm.t2_ref / 4.0),
            sm.t_pi_ref / 2.0,
            epsilon = 1e-20
        );
        let c = sm.config_at(&EchoConfig::default(), 1e-8);
        assert_abs_diff_eq!(c.rephase_duration, 2.0 * c.init_duration, epsilon = 1e-20);
        assert_abs_diff_eq!(
            c.init_rabi(),
            c.rephase_rabi(),
            epsilon = 1e-6 * c.init_rabi()
        );
    }

    #[test]
    fn closed_scaling_fidelity_is_three_quarters() {
        let ph = Physics::new(LambdaParams::material(), EnsembleSpec::single());
        let f =
            closed_system_fidelity(&ScalingModel::default(), &EchoConfig::default(), &ph).unwrap();
        assert_abs_diff_eq!(f, 0.75, epsilon = 1e-3);
    }

    #[test]
    fn zero_ambient_compensation_stays_put() {
        let settings = CompensationSettings {
            range: 10e-6,
            coarse_step: 5e-6,
            sweeps: 1,
            ..CompensationSettings::default()
        };
        let r = compensation_search(
            &FieldModel::default(),
            &EchoConfig::default(),
            &Physics::ideal(),
            &settings,
        )
        .unwrap();
        for c in r.compensation {
            assert!(c.abs() < 1e-6);
        }
        assert!(r.warning.is_some());
    }
}
