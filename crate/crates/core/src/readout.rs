//! Raman beat readout, decay curves and the three-parameter decay fit.
//!
//! The rotating-frame simulation carries no hyperfine carrier, so the
//! detected beat is rebuilt by re-modulating the readout-pulse coherence
//! `ρ₁ₑ` at the splitting. Amplitudes are reported relative to the readout
//! of an ideal freshly initialized state.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dynamics::{run_sequence, PulseLabel, Segment, SequenceSpec, Trajectory};
use crate::ensemble::Physics;
use crate::error::{Error, Result};
use crate::lambda::LambdaParams;
use crate::qstate::{DensityMatrix3, Level, C64};
use crate::sequences::{make_echo_sequence, make_readout_pulse, EchoConfig};

/// Fixed detector conversion from coherence to signal units.
pub const DETECTOR_GAIN: f64 = 1.0;
/// Minimum samples per beat period.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 4.0;
/// Minimum beat periods in an amplitude window.
pub const MIN_PERIODS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatTrace {
    /// Seconds from the start of the readout pulse.
    pub times: Vec<f64>,
    pub signal: Vec<f64>,
    /// Hz.
    pub beat_frequency: f64,
}

impl BeatTrace {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "signal"])?;
        for (t, s) in self.times.iter().zip(&self.signal) {
            wr.write_record([t.to_string(), s.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Beat signal `Re[ρ₁ₑ(t)·e^{i2πft}]` over the readout pulse of `traj`.
pub fn synthesize_beat(traj: &Trajectory, beat_frequency: f64) -> Result<BeatTrace> {
    if !(beat_frequency.is_finite() && beat_frequency > 0.0) {
        return Err(Error::Validation(format!(
            "beat frequency {beat_frequency} must be > 0"
        )));
    }
    let span = traj
        .span(PulseLabel::Readout)
        .ok_or_else(|| Error::Config("trajectory has no readout pulse".into()))?;
    let (times, states) = traj.window(span);
    if times.len() < 2 {
        return Err(Error::Config(
            "readout window has fewer than two samples".into(),
        ));
    }
    let dt = times[1] - times[0];
    if 1.0 / dt < MIN_SAMPLES_PER_PERIOD * beat_frequency {
        return Err(Error::Config(format!(
            "readout sampling {:.3e} Hz is below {MIN_SAMPLES_PER_PERIOD}x the beat frequency",
            1.0 / dt
        )));
    }
    let omega = 2.0 * PI * beat_frequency;
    let t0 = span.start_time;
    let mut rel = Vec::with_capacity(times.len());
    let mut signal = Vec::with_capacity(times.len());
    for (t, rho) in times.iter().zip(states) {
        let t = t - t0;
        let c = rho.element(Level::Ground1, Level::Excited) * C64::from_polar(1.0, omega * t);
        rel.push(t);
        signal.push(DETECTOR_GAIN * c.re);
    }
    Ok(BeatTrace {
        times: rel,
        signal,
        beat_frequency,
    })
}

/// Single-bin Fourier amplitude `(2/N)|Σ sₙ e^{−i2πf tₙ}|`.
pub fn beat_amplitude(trace: &BeatTrace) -> Result<f64> {
    let n = trace.signal.len();
    if n < 2 || trace.times.len() != n {
        return Err(Error::Config(
            "beat trace needs at least two samples".into(),
        ));
    }
    let dt = trace.times[1] - trace.times[0];
    let window = dt * n as f64;
    if window * trace.beat_frequency < MIN_PERIODS * (1.0 - 1e-9) {
        return Err(Error::Config(format!(
            "beat window {:.3e} s is shorter than {MIN_PERIODS} periods",
            window
        )));
    }
    let omega = 2.0 * PI * trace.beat_frequency;
    let sum: C64 = trace
        .times
        .iter()
        .zip(&trace.signal)
        .map(|(t, s)| C64::from_polar(*s, -omega * t))
        .sum();
    Ok(2.0 * sum.norm() / n as f64)
}

/// How an echo is turned into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    /// Beat synthesis and Fourier extraction over the readout pulse.
    #[default]
    Beat,
    /// `|ρ₀₁|` at the start of the readout pulse.
    Proxy,
}

fn raw_amplitude(traj: &Trajectory, cfg: &EchoConfig, mode: ReadoutMode) -> Result<f64> {
    match mode {
        ReadoutMode::Beat => beat_amplitude(&synthesize_beat(traj, cfg.splitting)?),
        ReadoutMode::Proxy => traj
            .state_before(PulseLabel::Readout)
            .map(|r| r.ground_coherence().norm())
            .ok_or_else(|| Error::Config("trajectory has no readout pulse".into())),
    }
}

/// Readout of `½ρ_e + ½ρ_D` in a closed resonant system: the largest echo
/// the sequence can produce.
pub fn reference_amplitude(cfg: &EchoConfig, mode: ReadoutMode) -> Result<f64> {
    let ideal = DensityMatrix3::weighted_sum([
        (0.5, &DensityMatrix3::basis(Level::Excited)),
        (0.5, &DensityMatrix3::dark(cfg.init_phase_offset)),
    ]);
    let mut seq = SequenceSpec::new(vec![Segment::Pulse(make_readout_pulse(cfg))], cfg.sample_dt);
    seq.refine = cfg.refine;
    let traj = run_sequence(&ideal, &LambdaParams::closed(), &seq)?;
    raw_amplitude(&traj, cfg, mode)
}

/// Normalized echo amplitude of one sequence.
pub fn echo_amplitude(cfg: &EchoConfig, physics: &Physics, mode: ReadoutMode) -> Result<f64> {
    let seq = make_echo_sequence(cfg)?;
    let traj = physics.run(&seq)?;
    Ok(raw_amplitude(&traj, cfg, mode)? / reference_amplitude(cfg, mode)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub taus: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Acquisitions averaged into each point.
    pub repeats: Vec<u32>,
}

impl DecayCurve {
    pub fn new(taus: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        let repeats = vec![1; taus.len()];
        let c = Self {
            taus,
            amplitudes,
            repeats,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.len() != self.amplitudes.len() || self.taus.len() != self.repeats.len() {
            return Err(Error::Validation(
                "decay curve columns differ in length".into(),
            ));
        }
        if self.taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(
                "decay curve taus must be strictly increasing".into(),
            ));
        }
        if self.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::Validation(
                "decay curve has non-finite amplitudes".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["tau", "amplitude", "repeats"])?;
        for k in 0..self.len() {
            wr.write_record([
                self.taus[k].to_string(),
                self.amplitudes[k].to_string(),
                self.repeats[k].to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// One normalized echo per storage time, computed in parallel.
pub fn assemble_decay_curve(
    cfg: &EchoConfig,
    taus: &[f64],
    physics: &Physics,
    mode: ReadoutMode,
) -> Result<DecayCurve> {
    if taus.len() < 3 {
        return Err(Error::Validation(
            "a decay curve needs at least 3 taus".into(),
        ));
    }
    physics.validate()?;
    let reference = reference_amplitude(cfg, mode)?;
    let raw: Vec<Result<f64>> = taus
        .par_iter()
        .map(|&tau| {
            let c = cfg.with_tau(tau);
            let traj = physics.run(&make_echo_sequence(&c)?)?;
            raw_amplitude(&traj, &c, mode)
        })
        .collect();
    let amplitudes = raw
        .into_iter()
        .map(|r| r.map(|a| a / reference))
        .collect::<Result<Vec<_>>>()?;
    DecayCurve::new(taus.to_vec(), amplitudes)
}

pub const FIT_MAX_ITERATIONS: usize = 200;
pub const FIT_STEP_TOL: f64 = 1e-10;

/// Least-squares fit of `A·exp(−τ/T₂) + C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub amplitude: f64,
    pub t2: f64,
    pub offset: f64,
    /// Row/column order (amplitude, t2, offset).
    pub covariance: [[f64; 3]; 3],
    pub ci95: [f64; 3],
    pub rss: f64,
    /// Residual variance `rss/(n − 3)`.
    pub reduced_chi2: f64,
    pub r_squared: f64,
    /// Lag-one autocorrelation of the residuals; near zero for a good model,
    /// large when the data has structure the model lacks (e.g. beating).
    pub residual_autocorrelation: f64,
    pub iterations: usize,
}

impl FitResult {
    pub fn predict(&self, tau: f64) -> f64 {
        self.amplitude * (-tau / self.t2).exp() + self.offset
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn model_and_jacobian(q: &Vector3<f64>, x: &[f64]) -> (Vec<f64>, Vec<[f64; 3]>) {
    let (a, t, c) = (q[0], q[1], q[2]);
    let mut f = Vec::with_capacity(x.len());
    let mut j = Vec::with_capacity(x.len());
    for &xi in x {
        let e = (-xi / t).exp();
        f.push(a * e + c);
        j.push([e, a * e * xi / (t * t), 1.0]);
    }
    (f, j)
}

fn rss_of(q: &Vector3<f64>, x: &[f64], y: &[f64]) -> f64 {
    let (f, _) = model_and_jacobian(q, x);
    f.iter().zip(y).map(|(fi, yi)| (yi - fi).powi(2)).sum()
}

fn normal_matrix(j: &[[f64; 3]]) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for row in j {
        for r in 0..3 {
            for c in 0..3 {
                m[(r, c)] += row[r] * row[c];
            }
        }
    }
    m
}

/// Levenberg–Marquardt with a ×10 damping schedule. Storage times and
/// amplitudes are rescaled internally (by the largest τ and the largest |y|)
/// so all three parameters are O(1) and the result is scale-equivariant.
pub fn fit_decay(curve: &DecayCurve) -> Result<FitResult> {
    curve.validate()?;
    let n = curve.len();
    if n < 5 {
        return Err(Error::Validation(format!("fit needs >= 5 points, got {n}")));
    }
    let yscale = curve.amplitudes.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if yscale == 0.0 || !yscale.is_finite() {
        return Err(Error::Degenerate("decay curve is identically zero".into()));
    }
    let y: Vec<f64> = curve.amplitudes.iter().map(|v| v / yscale).collect();
    let y = &y[..];
    let (ymin, ymax) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if ymax - ymin <= 1e-12 * ymax.abs().max(ymin.abs()).max(1e-300) {
        return Err(Error::Degenerate("decay curve has zero variance".into()));
    }
    let scale = curve.taus[n - 1].abs().max(f64::MIN_POSITIVE);
    let x: Vec<f64> = curve.taus.iter().map(|t| t / scale).collect();
    let span = (curve.taus[n - 1] - curve.taus[0]) / scale;

    let mut q = Vector3::new(ymax - ymin, 0.5 * span, ymin);
    let mut rss = rss_of(&q, &x, y);
    let mut lambda = 1e-3;
    let mut last_step = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < FIT_MAX_ITERATIONS {
        iterations += 1;
        let (f, j) = model_and_jacobian(&q, &x);
        let jtj = normal_matrix(&j);
        let mut grad = Vector3::zeros();
        for (row, (fi, yi)) in j.iter().zip(f.iter().zip(y)) {
            for k in 0..3 {
                grad[k] += row[k] * (yi - fi);
            }
        }
        let mut accepted = false;
        while lambda < 1e30 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&grad) else {
                lambda *= 10.0;
                continue;
            };
            last_step = step.norm() / q.norm().max(1e-300);
            let trial = q + step;
            let trial_rss = if trial[1] > 0.0 {
                rss_of(&trial, &x, y)
            } else {
                f64::INFINITY
            };
            if trial_rss <= rss {
                q = trial;
                rss = trial_rss;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            if last_step < FIT_STEP_TOL {
                break;
            }
            lambda *= 10.0;
        }
        if last_step < FIT_STEP_TOL || !accepted {
            converged = last_step < FIT_STEP_TOL || lambda >= 1e30;
            break;
        }
    }
    if !converged || !q.iter().all(|v| v.is_finite()) || q[1] <= 0.0 {
        return Err(Error::FitFailure {
            iterations,
            last_step,
            rss,
        });
    }
    // Near the minimum rss comparisons only resolve the parameters to about
    // sqrt(eps); a few undamped Gauss-Newton steps settle them to rounding.
    for _ in 0..4 {
        let (f, j) = model_and_jacobian(&q, &x);
        let mut grad = Vector3::zeros();
        for (row, (fi, yi)) in j.iter().zip(f.iter().zip(y)) {
            for k in 0..3 {
                grad[k] += row[k] * (yi - fi);
            }
        }
        let Some(step) = normal_matrix(&j).lu().solve(&grad) else {
            break;
        };
        let rel = step.norm() / q.norm().max(1e-300);
        if !(rel < 1e-6) || q[1] + step[1] <= 0.0 {
            break;
        }
        q += step;
        if rel < 1e-15 {
            break;
        }
    }

    let params = Vector3::new(q[0] * yscale, q[1] * scale, q[2] * yscale);
    let y = &curve.amplitudes;
    let (f, j) = model_and_jacobian(&params, &curve.taus);
    let jtj = normal_matrix(&j);
    let inv = jtj
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular Jacobian at the optimum".into()))?;
    let dof = (n - 3) as f64;
    let residuals: Vec<f64> = y.iter().zip(&f).map(|(yi, fi)| yi - fi).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let s2 = rss / dof;
    let cov = inv.scale(s2);
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Validation(e.to_string()))?
        .inverse_cdf(0.975);
    let mut covariance = [[0.0; 3]; 3];
    let mut ci95 = [0.0; 3];
    for r in 0..3 {
        for c in 0..3 {
            covariance[r][c] = cov[(r, c)];
        }
        ci95[r] = t * cov[(r, r)].max(0.0).sqrt();
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let lag: f64 = residuals.windows(2).map(|w| w[0] * w[1]).sum();
    let residual_autocorrelation = if rss > 0.0 { lag / rss } else { 0.0 };
    Ok(FitResult {
        amplitude: params[0],
        t2: params[1],
        offset: params[2],
        covariance,
        ci95,
        rss,
        reduced_chi2: s2,
        r_squared: 1.0 - rss / tss,
        residual_autocorrelation,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::linear_taus;
    use approx::assert_abs_diff_eq;

    fn cosine_trace(a: f64, phase: f64, f: f64, n: usize, dt: f64) -> BeatTrace {
        let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let signal = times
            .iter()
            .map(|t| a * (2.0 * PI * f * t + phase).cos())
            .collect();
        BeatTrace {
            times,
            signal,
            beat_frequency: f,
        }
    }

    #[test]
    fn fourier_identity_and_shift_invariance() {
        // 10 periods, 40 samples each
        let f = 10.2e6;
        let dt = 1.0 / (40.0 * f);
        let t = cosine_trace(0.37, 0.8, f, 400, dt);
        assert_abs_diff_eq!(beat_amplitude(&t).unwrap(), 0.37, epsilon = 1e-9);
        let mut shifted = t.clone();
        for x in &mut shifted.times {
            *x += 3.3e-8;
        }
        assert_abs_diff_eq!(
            beat_amplitude(&shifted).unwrap(),
            beat_amplitude(&t).unwrap(),
            epsilon = 1e-12
        );
        let zero = cosine_trace(0.0, 0.0, f, 400, dt);
        assert_eq!(beat_amplitude(&zero).unwrap(), 0.0);
    }

    #[test]
    fn short_window_is_rejected() {
        let f = 10.2e6;
        let t = cosine_trace(1.0, 0.0, f, 40, 1.0 / (40.0 * f));
        assert!(matches!(beat_amplitude(&t), Err(Error::Config(_))));
    }

    fn readout_of(rho: &DensityMatrix3, cfg: &EchoConfig) -> f64 {
        let seq = SequenceSpec::new(vec![Segment::Pulse(make_readout_pulse(cfg))], cfg.sample_dt);
        let traj = run_sequence(rho, &LambdaParams::closed(), &seq).unwrap();
        beat_amplitude(&synthesize_beat(&traj, cfg.splitting).unwrap()).unwrap()
    }

    fn with_coherence(c: f64, phase: f64) -> DensityMatrix3 {
        let mut m = DensityMatrix3::mixed_ground().matrix().to_owned();
        m[(0, 1)] = C64::from_polar(c, phase);
        m[(1, 0)] = C64::from_polar(c, -phase);
        DensityMatrix3::new(m).unwrap()
    }

    #[test]
    fn beat_is_linear_and_phase_covariant() {
        let cfg = EchoConfig {
            readout_rabi: Some(0.1 * EchoConfig::default().init_rabi()),
            ..EchoConfig::default()
        };
        let a1 = readout_of(&with_coherence(0.1, 0.0), &cfg);
        let a2 = readout_of(&with_coherence(0.2, 0.0), &cfg);
        assert_abs_diff_eq!(a2 / a1, 2.0, epsilon = 1e-3);
        let a3 = readout_of(&with_coherence(0.1, 1.1), &cfg);
        assert_abs_diff_eq!(a3 / a1, 1.0, epsilon = 2e-2);
        assert_abs_diff_eq!(
            readout_of(&DensityMatrix3::mixed_ground(), &cfg),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn coarse_sampling_is_rejected() {
        let cfg = EchoConfig {
            sample_dt: 50e-9,
            ..EchoConfig::default()
        };
        let seq = SequenceSpec::new(
            vec![Segment::Pulse(make_readout_pulse(&cfg))],
            cfg.sample_dt,
        );
        let traj = run_sequence(&DensityMatrix3::dark(0.0), &LambdaParams::closed(), &seq).unwrap();
        assert!(synthesize_beat(&traj, cfg.splitting).is_err());
    }

    fn exact_curve(a: f64, t2: f64, c: f64) -> DecayCurve {
        let taus = linear_taus(10e-6, 1500e-6, 30);
        let amps = taus.iter().map(|t| a * (-t / t2).exp() + c).collect();
        DecayCurve::new(taus, amps).unwrap()
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let fit = fit_decay(&exact_curve(1.0, 500e-6, 0.0)).unwrap();
        assert_abs_diff_eq!(fit.amplitude, 1.0, epsilon = 1e-6);
        assert!((fit.t2 / 500e-6 - 1.0).abs() < 1e-6);
        assert_abs_diff_eq!(fit.offset, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn fit_is_scale_equivariant() {
        let base = exact_curve(0.8, 300e-6, 0.05);
        let mut noisy = base.clone();
        for (k, a) in noisy.amplitudes.iter_mut().enumerate() {
            *a += 0.01 * ((k * 7919) as f64).sin();
        }
        let f1 = fit_decay(&noisy).unwrap();
        let mut scaled = noisy.clone();
        for a in &mut scaled.amplitudes {
            *a *= 3.5;
        }
        let f2 = fit_decay(&scaled).unwrap();
        assert!((f2.t2 / f1.t2 - 1.0).abs() < 1e-9);
        assert!((f2.amplitude / (3.5 * f1.amplitude) - 1.0).abs() < 1e-9);
        assert!((f2.offset / (3.5 * f1.offset) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn degenerate_and_short_curves() {
        let taus = linear_taus(1e-6, 5e-6, 5);
        let flat = DecayCurve::new(taus.clone(), vec![0.5; 5]).unwrap();
        assert!(matches!(fit_decay(&flat), Err(Error::Degenerate(_))));
        let short = DecayCurve::new(taus[..4].to_vec(), vec![1.0, 0.8, 0.6, 0.5]).unwrap();
        assert!(fit_decay(&short).is_err());
        assert!(DecayCurve::new(vec![2.0, 1.0, 3.0], vec![0.0; 3]).is_err());
    }

    #[test]
    fn beating_curve_shows_residual_structure() {
        let taus = linear_taus(10e-6, 1500e-6, 30);
        let amps: Vec<f64> = taus
            .iter()
            .map(|t| (PI * 6e3 * t).cos().abs() * (-t / 500e-6).exp())
            .collect();
        let fit = fit_decay(&DecayCurve::new(taus, amps).unwrap()).unwrap();
        let clean = fit_decay(&exact_curve(1.0, 500e-6, 0.0)).unwrap();
        assert!(fit.t2 < 500e-6);
        assert!(fit.reduced_chi2 > 1e3 * clean.reduced_chi2.max(1e-30));
    }

    #[test]
    fn proxy_and_beat_references() {
        let cfg = EchoConfig::default();
        assert_abs_diff_eq!(
            reference_amplitude(&cfg, ReadoutMode::Proxy).unwrap(),
            0.25,
            epsilon = 1e-12
        );
        assert!(reference_amplitude(&cfg, ReadoutMode::Beat).unwrap() > 0.0);
    }
}
