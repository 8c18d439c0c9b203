//! The driven Λ-system: rotating-frame Hamiltonian, bright/dark algebra and
//! the Lindblad right-hand side.
//!
//! Units: ħ = 1, all frequencies and rates in rad/s or 1/s. Off-diagonal
//! couplings carry Ω/2 so that a resonant pulse with Ω·t = π inverts a
//! two-level transition.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{bright_ket, dark_ket, DensityMatrix3, Matrix3c, C64};

const I: C64 = C64::new(0.0, 1.0);

/// Physical rates and detunings of one ensemble member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaParams {
    /// Rabi frequency of the `|0⟩→|e⟩` component (rad/s).
    pub rabi0: f64,
    /// Rabi frequency of the `|1⟩→|e⟩` component (rad/s).
    pub rabi1: f64,
    pub phase0: f64,
    pub phase1: f64,
    /// One-photon detuning (rad/s), placed on `|e⟩`.
    pub delta_opt: f64,
    /// Two-photon detuning (rad/s), split as ±½ across `|0⟩`/`|1⟩`.
    pub delta_spin: f64,
    /// Zeeman contribution to the two-photon detuning (rad/s). Its sign is
    /// reversed by a rephasing pulse, so unlike `delta_spin` it is not
    /// refocused by the echo.
    #[serde(default)]
    pub zeeman_shift: f64,
    /// Excited-state population decay 1/T₁,opt (1/s).
    pub gamma_opt_decay: f64,
    /// Optical pure dephasing (1/s).
    pub gamma_opt_deph: f64,
    /// Ground-coherence dephasing 1/T₂,spin (1/s).
    pub gamma_spin_deph: f64,
    /// Fraction of `|e⟩` decay ending in `|0⟩`.
    pub branch0: f64,
}

impl Default for LambdaParams {
    fn default() -> Self {
        Self {
            rabi0: 0.0,
            rabi1: 0.0,
            phase0: 0.0,
            phase1: 0.0,
            delta_opt: 0.0,
            delta_spin: 0.0,
            zeeman_shift: 0.0,
            gamma_opt_decay: 0.0,
            gamma_opt_deph: 0.0,
            gamma_spin_deph: 0.0,
            branch0: 0.5,
        }
    }
}

impl LambdaParams {
    /// Closed system, no drive, no detuning.
    pub fn closed() -> Self {
        Self::default()
    }

    /// Rates from the optical T₁ and T₂ and the spin T₂ (all in s). The
    /// optical pure dephasing makes up whatever T₂,opt needs beyond the
    /// lifetime limit; it is clamped at zero when T₂,opt > 2T₁,opt.
    pub fn from_lifetimes(t1_opt: f64, t2_opt: f64, t2_spin: f64) -> Result<Self> {
        for (name, v) in [("t1_opt", t1_opt), ("t2_opt", t2_opt), ("t2_spin", t2_spin)] {
            if !(v > 0.0) {
                return Err(Error::Validation(format!("{name} = {v} must be > 0")));
            }
        }
        let gamma = 1.0 / t1_opt;
        Ok(Self {
            gamma_opt_decay: gamma,
            gamma_opt_deph: (1.0 / t2_opt - 0.5 * gamma).max(0.0),
            gamma_spin_deph: if t2_spin.is_infinite() {
                0.0
            } else {
                1.0 / t2_spin
            },
            ..Self::default()
        })
    }

    /// Material defaults: T₁,opt 164 µs, T₂,opt 106 µs (3 kHz homogeneous
    /// linewidth), spin T₂ 500 µs, equal branching.
    pub fn material() -> Self {
        Self::from_lifetimes(164e-6, 106e-6, 500e-6).expect("positive lifetimes")
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.rabi0,
            self.rabi1,
            self.phase0,
            self.phase1,
            self.delta_opt,
            self.delta_spin,
            self.zeeman_shift,
            self.gamma_opt_decay,
            self.gamma_opt_deph,
            self.gamma_spin_deph,
            self.branch0,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("LambdaParams: non-finite value".into()));
        }
        for (name, v) in [
            ("rabi0", self.rabi0),
            ("rabi1", self.rabi1),
            ("gamma_opt_decay", self.gamma_opt_decay),
            ("gamma_opt_deph", self.gamma_opt_deph),
            ("gamma_spin_deph", self.gamma_spin_deph),
        ] {
            if v < 0.0 {
                return Err(Error::Validation(format!("LambdaParams.{name} = {v} < 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.branch0) {
            return Err(Error::Validation(format!(
                "LambdaParams.branch0 = {} outside [0, 1]",
                self.branch0
            )));
        }
        Ok(())
    }

    /// Total decay rate of the optical coherences, Γ/2 + γ_deph.
    pub fn optical_coherence_rate(&self) -> f64 {
        0.5 * self.gamma_opt_decay + self.gamma_opt_deph
    }

    /// Adds a phenomenological excitation-induced spin dephasing rate.
    pub fn with_excitation_dephasing(mut self, rate: f64) -> Self {
        self.gamma_spin_deph += rate;
        self
    }

    /// Largest rate or frequency scale in the generator; bounds the
    /// integrator step.
    pub fn max_rate(&self) -> f64 {
        let bright = (self.rabi0 * self.rabi0 + self.rabi1 * self.rabi1).sqrt() / 2.0;
        [
            self.rabi0,
            self.rabi1,
            bright,
            self.delta_opt.abs(),
            (self.delta_spin + self.zeeman_shift).abs(),
            (self.delta_spin - self.zeeman_shift).abs(),
            self.gamma_opt_decay,
            self.gamma_opt_deph,
            self.gamma_spin_deph,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    fn drive_matrix_elements(&self) -> (C64, C64) {
        (
            C64::from_polar(0.5 * self.rabi0, self.phase0),
            C64::from_polar(0.5 * self.rabi1, self.phase1),
        )
    }
}

/// Change of basis on the ground manifold from `(|0⟩, |1⟩)` to `(|B⟩, |D⟩)`
/// for a drive with a given relative phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrightDarkBasis {
    /// Columns are `|B⟩` and `|D⟩` in computational coordinates.
    pub unitary: Matrix2<C64>,
}

impl BrightDarkBasis {
    pub fn new(relative_phase: f64) -> Self {
        let b = bright_ket(relative_phase);
        let d = dark_ket(relative_phase);
        Self {
            unitary: Matrix2::from_columns(&[b, d]),
        }
    }

    pub fn for_params(p: &LambdaParams) -> Self {
        Self::new(p.phase0 - p.phase1)
    }

    pub fn bright(&self) -> Vector2<C64> {
        self.unitary.column(0).into_owned()
    }

    pub fn dark(&self) -> Vector2<C64> {
        self.unitary.column(1).into_owned()
    }
}

/// Rotating-frame Hamiltonian (ħ = 1) with the Zeeman term taken at the given
/// sign.
pub fn hamiltonian_with_zeeman(p: &LambdaParams, zeeman_sign: f64) -> Matrix3c {
    let (g0, g1) = p.drive_matrix_elements();
    let spin = p.delta_spin + zeeman_sign * p.zeeman_shift;
    let mut h = Matrix3c::zeros();
    h[(0, 0)] = C64::new(0.5 * spin, 0.0);
    h[(1, 1)] = C64::new(-0.5 * spin, 0.0);
    h[(2, 2)] = C64::new(p.delta_opt, 0.0);
    h[(2, 0)] = g0;
    h[(0, 2)] = g0.conj();
    h[(2, 1)] = g1;
    h[(1, 2)] = g1.conj();
    h
}

pub fn hamiltonian(p: &LambdaParams) -> Matrix3c {
    hamiltonian_with_zeeman(p, 1.0)
}

/// `(⟨e|H|B⟩, ⟨e|H|D⟩)` against the zero-phase bright/dark kets
/// `(|0⟩ ± |1⟩)/√2`.
pub fn coupling_strengths(p: &LambdaParams) -> (C64, C64) {
    let (g0, g1) = p.drive_matrix_elements();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ((g0 + g1) * s, (g0 - g1) * s)
}

/// Precomputed generator of the master equation for fixed parameters.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    h: Matrix3c,
    decay0: f64,
    decay1: f64,
    opt_deph: f64,
    spin_deph: f64,
}

impl Liouvillian {
    pub fn new(p: &LambdaParams) -> Self {
        Self::with_zeeman_sign(p, 1.0)
    }

    pub fn with_zeeman_sign(p: &LambdaParams, zeeman_sign: f64) -> Self {
        Self {
            h: hamiltonian_with_zeeman(p, zeeman_sign),
            decay0: p.branch0 * p.gamma_opt_decay,
            decay1: (1.0 - p.branch0) * p.gamma_opt_decay,
            opt_deph: p.gamma_opt_deph,
            spin_deph: p.gamma_spin_deph,
        }
    }

    pub fn hamiltonian(&self) -> &Matrix3c {
        &self.h
    }

    /// dρ/dt = −i[H, ρ] + Σₖ D[Lₖ]ρ with
    ///
    /// * `L = √(b Γ) |0⟩⟨e|`, `L = √((1−b) Γ) |1⟩⟨e|` (spontaneous decay),
    /// * `L = √(2γ_opt) |e⟩⟨e|` (optical coherences decay at γ_opt),
    /// * `L = √(γ_spin/2) (|0⟩⟨0| − |1⟩⟨1|)` (ρ₀₁ decays at γ_spin; the
    ///   optical coherences pick up an extra γ_spin/4).
    pub fn apply(&self, rho: &Matrix3c) -> Matrix3c {
        let h = &self.h;
        let mut out = (h * rho - rho * h) * (-I);

        let gamma = self.decay0 + self.decay1;
        if gamma > 0.0 {
            let ree = rho[(2, 2)];
            out[(0, 0)] += ree * self.decay0;
            out[(1, 1)] += ree * self.decay1;
            out[(2, 2)] -= ree * gamma;
            // -½{L†L, ρ} with L†L = Γ|e⟩⟨e|
            for k in 0..2 {
                out[(k, 2)] -= rho[(k, 2)] * (0.5 * gamma);
                out[(2, k)] -= rho[(2, k)] * (0.5 * gamma);
            }
        }
        if self.opt_deph > 0.0 {
            for k in 0..2 {
                out[(k, 2)] -= rho[(k, 2)] * self.opt_deph;
                out[(2, k)] -= rho[(2, k)] * self.opt_deph;
            }
        }
        if self.spin_deph > 0.0 {
            out[(0, 1)] -= rho[(0, 1)] * self.spin_deph;
            out[(1, 0)] -= rho[(1, 0)] * self.spin_deph;
            let q = 0.25 * self.spin_deph;
            for k in 0..2 {
                out[(k, 2)] -= rho[(k, 2)] * q;
                out[(2, k)] -= rho[(2, k)] * q;
            }
        }
        out
    }
}

/// Time derivative of `rho` under `p` (1/s).
pub fn lindblad_rhs(rho: &DensityMatrix3, p: &LambdaParams) -> Matrix3c {
    Liouvillian::new(p).apply(rho.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::Level;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

    fn drive(rabi0: f64, rabi1: f64) -> LambdaParams {
        LambdaParams {
            rabi0,
            rabi1,
            ..LambdaParams::closed()
        }
    }

    /// Generic dissipator `γ (LρL† − ½{L†L, ρ})` as an independent check of
    /// the hand-expanded terms in `Liouvillian::apply`.
    fn dissipator(l: &Matrix3c, rho: &Matrix3c) -> Matrix3c {
        let ld = l.adjoint();
        let ldl = ld * l;
        l * rho * ld - (ldl * rho + rho * ldl) * C64::new(0.5, 0.0)
    }

    #[test]
    fn bright_coupling_is_enhanced_and_dark_vanishes() {
        let omega = 1.0e6;
        let (b, d) = coupling_strengths(&drive(omega, omega));
        assert_abs_diff_eq!(b.re, SQRT_2 * omega / 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(d.norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn single_colour_couples_both_equally() {
        let omega = 2.0e6;
        let (b, d) = coupling_strengths(&drive(omega, 0.0));
        let expect = omega / (2.0 * SQRT_2);
        assert_abs_diff_eq!(b.norm(), expect, epsilon = 1e-6);
        assert_abs_diff_eq!(d.norm(), expect, epsilon = 1e-6);
    }

    #[test]
    fn quarter_turn_relative_phase_splits_coupling() {
        let omega = 1.0;
        let p = LambdaParams {
            phase1: PI / 2.0,
            ..drive(omega, omega)
        };
        let (b, d) = coupling_strengths(&p);
        assert_abs_diff_eq!(b.norm(), omega / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.norm(), omega / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn half_turn_relative_phase_exchanges_bright_and_dark() {
        let p = LambdaParams {
            phase1: PI,
            ..drive(1.0, 1.0)
        };
        let (b, d) = coupling_strengths(&p);
        assert_abs_diff_eq!(b.norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.norm(), FRAC_1_SQRT_2, epsilon = 1e-12);
        // The phase-aware basis follows the exchange.
        let basis = BrightDarkBasis::for_params(&p);
        let h = hamiltonian(&p);
        let dk = basis.dark();
        let coupling = h[(2, 0)] * dk[0] + h[(2, 1)] * dk[1];
        assert_abs_diff_eq!(coupling.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn basis_is_unitary() {
        for phase in [0.0, 0.3, PI / 2.0, 2.0] {
            let u = BrightDarkBasis::new(phase).unitary;
            let eye = u.adjoint() * u;
            assert_abs_diff_eq!((eye - Matrix2::identity()).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian_with_expected_layout() {
        let p = LambdaParams {
            rabi0: 3.0,
            rabi1: 5.0,
            phase0: 0.4,
            phase1: -1.1,
            delta_opt: 7.0,
            delta_spin: 2.0,
            ..LambdaParams::closed()
        };
        let h = hamiltonian(&p);
        assert_abs_diff_eq!((h - h.adjoint()).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(2, 0)].norm(), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(2, 1)].arg(), -1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(0, 0)].re, 1.0);
        assert_abs_diff_eq!(h[(1, 1)].re, -1.0);
        assert_abs_diff_eq!(h[(2, 2)].re, 7.0);
    }

    #[test]
    fn dark_state_is_stationary() {
        let rhs = lindblad_rhs(&DensityMatrix3::dark(0.0), &drive(1e6, 1e6));
        assert_abs_diff_eq!(rhs.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn excited_decay_rate_equations() {
        let gamma = 1.0e4;
        let p = LambdaParams {
            gamma_opt_decay: gamma,
            branch0: 0.5,
            ..LambdaParams::closed()
        };
        let rhs = lindblad_rhs(&DensityMatrix3::basis(Level::Excited), &p);
        assert_abs_diff_eq!(rhs[(2, 2)].re, -gamma, epsilon = 1e-9);
        assert_abs_diff_eq!(rhs[(0, 0)].re, gamma / 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rhs[(1, 1)].re, gamma / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn ground_coherence_dephases_at_spin_rate() {
        let g = 2000.0;
        let p = LambdaParams {
            gamma_spin_deph: g,
            ..LambdaParams::closed()
        };
        let rho = DensityMatrix3::dark(0.0);
        let rhs = lindblad_rhs(&rho, &p);
        // d/dt ρ₀₁ = −γ ρ₀₁
        assert_abs_diff_eq!(
            rhs[(0, 1)].re,
            -g * rho.ground_coherence().re,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(rhs.trace().norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_generic_dissipator_form() {
        let p = LambdaParams {
            rabi0: 1.3,
            rabi1: 0.7,
            phase0: 0.2,
            phase1: 1.0,
            delta_opt: 0.5,
            delta_spin: -0.3,
            gamma_opt_decay: 0.9,
            gamma_opt_deph: 0.4,
            gamma_spin_deph: 0.6,
            branch0: 0.3,
            ..LambdaParams::closed()
        };
        let v =
            nalgebra::Vector3::new(C64::new(0.3, 0.1), C64::new(-0.5, 0.4), C64::new(0.2, -0.6));
        let rho = (v * v.adjoint()).scale(1.0 / v.norm_squared());
        let h = hamiltonian(&p);
        let mut l_decay0 = Matrix3c::zeros();
        l_decay0[(0, 2)] = C64::new((p.branch0 * p.gamma_opt_decay).sqrt(), 0.0);
        let mut l_decay1 = Matrix3c::zeros();
        l_decay1[(1, 2)] = C64::new(((1.0 - p.branch0) * p.gamma_opt_decay).sqrt(), 0.0);
        let mut l_opt = Matrix3c::zeros();
        l_opt[(2, 2)] = C64::new((2.0 * p.gamma_opt_deph).sqrt(), 0.0);
        let mut l_spin = Matrix3c::zeros();
        let a = (p.gamma_spin_deph / 2.0).sqrt();
        l_spin[(0, 0)] = C64::new(a, 0.0);
        l_spin[(1, 1)] = C64::new(-a, 0.0);
        let expect = (h * rho - rho * h) * (-I)
            + dissipator(&l_decay0, &rho)
            + dissipator(&l_decay1, &rho)
            + dissipator(&l_opt, &rho)
            + dissipator(&l_spin, &rho);
        let got = Liouvillian::new(&p).apply(&rho);
        assert_abs_diff_eq!((got - expect).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_rate_rejected() {
        let p = LambdaParams {
            gamma_spin_deph: -1.0,
            ..LambdaParams::closed()
        };
        assert!(p.validate().is_err());
        let p = LambdaParams {
            branch0: 1.5,
            ..LambdaParams::closed()
        };
        assert!(p.validate().is_err());
    }
}
