//! Ground-qubit state tomography by population readout.
//!
//! The z projection comes straight from the ground populations; x and y are
//! read the same way after an ideal spin π/2 pre-rotation that maps the axis
//! of interest onto z. The matrix is then rebuilt from the Pauli expansion.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use nalgebra::{SymmetricEigen, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::dynamics::PulseLabel;
use crate::ensemble::Physics;
use crate::error::{Error, Result};
use crate::qstate::{dark_ket, pauli_x, pauli_y, DensityMatrix3, GroundQubitState, Matrix2c, C64};
use crate::sequences::{make_init_rephase_sequence, make_init_sequence, EchoConfig};

/// Bloch vectors longer than this are rejected rather than clamped.
pub const CONSISTENCY_LIMIT: f64 = 1.05;

fn gaussian(noise_rms: f64) -> Result<Option<Normal<f64>>> {
    if !(noise_rms.is_finite() && noise_rms >= 0.0) {
        return Err(Error::Validation(format!(
            "noise_rms = {noise_rms} must be >= 0"
        )));
    }
    if noise_rms == 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, noise_rms)
        .map(Some)
        .map_err(|e| Error::Validation(e.to_string()))
}

/// Diagonal of `rho` plus independent Gaussian noise on each entry.
pub fn measure_populations<R: Rng + ?Sized>(
    rho: &DensityMatrix3,
    noise_rms: f64,
    rng: &mut R,
) -> Result<[f64; 3]> {
    let mut p = rho.populations();
    if let Some(d) = gaussian(noise_rms)? {
        for v in &mut p {
            *v += d.sample(rng);
        }
    }
    Ok(p)
}

/// `exp(−iθ σ/2)` for a Pauli matrix σ.
fn spin_rotation(generator: Matrix2c, angle: f64) -> Matrix2c {
    let (c, s) = ((0.5 * angle).cos(), (0.5 * angle).sin());
    Matrix2c::identity().scale(c) - generator * C64::new(0.0, s)
}

/// Rotation taking the x axis onto z.
pub fn x_to_z() -> Matrix2c {
    spin_rotation(pauli_y(), -FRAC_PI_2)
}

/// Rotation taking the y axis onto z.
pub fn y_to_z() -> Matrix2c {
    spin_rotation(pauli_x(), FRAC_PI_2)
}

fn population_difference<R: Rng + ?Sized>(
    m: &Matrix2c,
    noise: Option<&Normal<f64>>,
    rng: &mut R,
) -> f64 {
    let (mut p0, mut p1) = (m[(0, 0)].re, m[(1, 1)].re);
    if let Some(d) = noise {
        p0 += d.sample(rng);
        p1 += d.sample(rng);
    }
    p0 - p1
}

/// `(x, y, z)` projections from three population measurements.
pub fn projection_measurements<R: Rng + ?Sized>(
    ground: &GroundQubitState,
    noise_rms: f64,
    rng: &mut R,
) -> Result<[f64; 3]> {
    let noise = gaussian(noise_rms)?;
    let rho = ground.matrix();
    let rotated = |u: Matrix2c| u * rho * u.adjoint();
    let x = population_difference(&rotated(x_to_z()), noise.as_ref(), rng);
    let y = population_difference(&rotated(y_to_z()), noise.as_ref(), rng);
    let z = population_difference(rho, noise.as_ref(), rng);
    Ok([x, y, z])
}

/// `(I + xX + yY + zZ)/2`, clamped to the nearest positive matrix when noise
/// pushes the Bloch vector slightly outside the sphere.
pub fn reconstruct(x: f64, y: f64, z: f64) -> Result<GroundQubitState> {
    if ![x, y, z].iter().all(|v| v.is_finite()) {
        return Err(Error::Validation("non-finite projection".into()));
    }
    let r = (x * x + y * y + z * z).sqrt();
    if r > CONSISTENCY_LIMIT {
        return Err(Error::InconsistentData(r));
    }
    let m = (Matrix2c::identity()
        + pauli_x().scale(x)
        + pauli_y().scale(y)
        + crate::qstate::pauli_z().scale(z))
    .scale(0.5);
    if r <= 1.0 {
        return GroundQubitState::new(m);
    }
    let eig = SymmetricEigen::new(m);
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let total: f64 = clipped.sum();
    let mut out = Matrix2c::zeros();
    for k in 0..2 {
        let v = eig.eigenvectors.column(k);
        out += (v * v.adjoint()).scale(clipped[k] / total);
    }
    let out = (out + out.adjoint()).scale(0.5);
    GroundQubitState::new(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomographyResult {
    pub projections: [f64; 3],
    pub reconstructed: GroundQubitState,
    /// Fidelity against the pure target state, missing trace counted as
    /// mixed.
    pub fidelity_vs_target: f64,
    /// Uhlmann fidelity against the best state the protocol can produce,
    /// when one is supplied.
    pub fidelity_vs_attainable: Option<f64>,
}

#[derive(Serialize)]
struct TomographyRecord<'a> {
    label: &'a str,
    x: f64,
    y: f64,
    z: f64,
    rho00: f64,
    rho11: f64,
    rho01_re: f64,
    rho01_im: f64,
    fidelity_vs_target: f64,
    fidelity_vs_attainable: Option<f64>,
}

impl TomographyResult {
    fn record<'a>(&self, label: &'a str) -> TomographyRecord<'a> {
        let m = self.reconstructed.matrix();
        let [x, y, z] = self.projections;
        TomographyRecord {
            label,
            x,
            y,
            z,
            rho00: m[(0, 0)].re,
            rho11: m[(1, 1)].re,
            rho01_re: m[(0, 1)].re,
            rho01_im: m[(0, 1)].im,
            fidelity_vs_target: self.fidelity_vs_target,
            fidelity_vs_attainable: self.fidelity_vs_attainable,
        }
    }

    pub fn to_json(&self, label: &str) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.record(label))?)
    }
}

/// One CSV row per labelled result.
pub fn write_tomography_csv<W: Write>(w: W, results: &[(String, TomographyResult)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (label, r) in results {
        wr.serialize(r.record(label))?;
    }
    wr.flush()?;
    Ok(())
}

/// Measure, reconstruct and score against `target`.
pub fn run_tomography<R: Rng + ?Sized>(
    ground: &GroundQubitState,
    target: &Vector2<C64>,
    attainable: Option<&GroundQubitState>,
    noise_rms: f64,
    rng: &mut R,
) -> Result<TomographyResult> {
    let projections = projection_measurements(ground, noise_rms, rng)?;
    let [x, y, z] = projections;
    let reconstructed = reconstruct(x, y, z)?;
    let fidelity_vs_target = reconstructed.fidelity(target)?;
    let fidelity_vs_attainable = attainable.map(|a| reconstructed.state_fidelity(a));
    Ok(TomographyResult {
        projections,
        reconstructed,
        fidelity_vs_target,
        fidelity_vs_attainable,
    })
}

/// The three characterization cases: an x-axis state, a y-axis state, and
/// the x-axis state followed by the rephasing pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QstCase {
    XAxis,
    YAxis,
    Rephased,
}

impl QstCase {
    pub const ALL: [QstCase; 3] = [QstCase::XAxis, QstCase::YAxis, QstCase::Rephased];

    pub fn name(self) -> &'static str {
        match self {
            QstCase::XAxis => "x_axis",
            QstCase::YAxis => "y_axis",
            QstCase::Rephased => "rephased",
        }
    }

    /// Echo configuration for this case derived from `base`.
    pub fn config(self, base: &EchoConfig) -> EchoConfig {
        let offset = match self {
            QstCase::YAxis => base.init_phase_offset + FRAC_PI_2,
            _ => base.init_phase_offset,
        };
        EchoConfig {
            init_phase_offset: offset,
            ..base.clone()
        }
    }

    fn ground_state(self, cfg: &EchoConfig, physics: &Physics) -> Result<GroundQubitState> {
        let seq = match self {
            QstCase::Rephased => make_init_rephase_sequence(cfg)?,
            _ => make_init_sequence(cfg)?,
        };
        let tr = physics.run(&seq)?;
        let last = match self {
            QstCase::Rephased => tr.state_after(PulseLabel::RephasePi),
            _ => tr.state_after(PulseLabel::InitPiHalf),
        };
        Ok(last.unwrap_or_else(|| tr.final_state()).ground_block())
    }
}

/// Runs one case. The ground block is taken at the end of the last pulse;
/// the excited population left there is scored as if it had decayed
/// equally into both ground levels. The attainable reference is the same
/// case simulated without loss or inhomogeneity.
pub fn qst_case<R: Rng + ?Sized>(
    case: QstCase,
    base: &EchoConfig,
    physics: &Physics,
    noise_rms: f64,
    rng: &mut R,
) -> Result<TomographyResult> {
    let cfg = case.config(base);
    let ground = case.ground_state(&cfg, physics)?;
    let ideal = case.ground_state(&cfg, &Physics::ideal())?;
    run_tomography(
        &ground,
        &dark_ket(cfg.init_phase_offset),
        Some(&ideal),
        noise_rms,
        rng,
    )
}
