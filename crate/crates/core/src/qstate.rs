//! Density matrices for a single Λ-system member and its ground-state qubit.
//!
//! Basis order is fixed as `(|0⟩, |1⟩, |e⟩)` for three-level states and
//! `(|0⟩, |1⟩)` for the ground qubit. Ground blocks may be sub-normalized:
//! after an EIT initialization half of the population sits in `|e⟩`, and the
//! ground block alone has trace ½.

use std::fmt::Write as _;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Matrix3c = Matrix3<C64>;
pub type Matrix2c = Matrix2<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-9;

const I: C64 = C64::new(0.0, 1.0);

/// Level index in the three-level basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Ground0 = 0,
    Ground1 = 1,
    Excited = 2,
}

/// Pauli matrices on the ground manifold.
pub fn pauli_x() -> Matrix2c {
    Matrix2c::new(C64::ZERO, C64::ONE, C64::ONE, C64::ZERO)
}

pub fn pauli_y() -> Matrix2c {
    Matrix2c::new(C64::ZERO, -I, I, C64::ZERO)
}

pub fn pauli_z() -> Matrix2c {
    Matrix2c::new(C64::ONE, C64::ZERO, C64::ZERO, -C64::ONE)
}

/// Ground superposition that does not couple to a bichromatic drive whose
/// components have relative phase `relative_phase = phase0 - phase1`.
///
/// For zero relative phase this is `(|0⟩ - |1⟩)/√2`.
pub fn dark_ket(relative_phase: f64) -> Vector2<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Vector2::new(C64::new(s, 0.0), -C64::from_polar(s, relative_phase))
}

/// Ground superposition maximally coupled to the same drive; `(|0⟩ + |1⟩)/√2`
/// for zero relative phase.
pub fn bright_ket(relative_phase: f64) -> Vector2<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Vector2::new(C64::new(s, 0.0), C64::from_polar(s, relative_phase))
}

fn hermitian_defect<const N: usize>(m: &nalgebra::SMatrix<C64, N, N>) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..N {
        for c in 0..N {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

fn min_eigenvalue2(m: &Matrix2c) -> f64 {
    let herm = (m + m.adjoint()).scale(0.5);
    SymmetricEigen::new(herm).eigenvalues.min()
}

fn min_eigenvalue3(m: &Matrix3c) -> f64 {
    let herm = (m + m.adjoint()).scale(0.5);
    SymmetricEigen::new(herm).eigenvalues.min()
}

fn check_state<const N: usize>(
    m: &nalgebra::SMatrix<C64, N, N>,
    min_eigenvalue: impl FnOnce() -> f64,
    what: &str,
) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Validation(format!("{what}: non-finite element")));
    }
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL {
        return Err(Error::Validation(format!(
            "{what}: not Hermitian (defect {defect:.3e})"
        )));
    }
    let tr = m.trace();
    if tr.im.abs() > HERMITIAN_TOL || tr.re < -TRACE_TOL || tr.re > 1.0 + TRACE_TOL {
        return Err(Error::Validation(format!(
            "{what}: trace {tr} outside [0, 1]"
        )));
    }
    let lmin = min_eigenvalue();
    if lmin < -POSITIVITY_TOL {
        return Err(Error::Validation(format!(
            "{what}: negative eigenvalue {lmin:.3e}"
        )));
    }
    Ok(())
}

/// State of one Λ-system member over `(|0⟩, |1⟩, |e⟩)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix3(Matrix3c);

impl DensityMatrix3 {
    /// Validates Hermiticity, trace range and positivity.
    pub fn new(m: Matrix3c) -> Result<Self> {
        check_state(&m, || min_eigenvalue3(&m), "DensityMatrix3")?;
        Ok(Self(m))
    }

    /// Wraps a matrix that is known to be valid, e.g. the output of a
    /// trace-preserving propagation step.
    pub(crate) fn from_matrix_unchecked(m: Matrix3c) -> Self {
        Self(m)
    }

    pub fn basis(level: Level) -> Self {
        let mut m = Matrix3c::zeros();
        let k = level as usize;
        m[(k, k)] = C64::ONE;
        Self(m)
    }

    /// `ρ_mixed = ½|0⟩⟨0| + ½|1⟩⟨1|`, equal to `½ρ_B + ½ρ_D` in any
    /// bright/dark basis.
    pub fn mixed_ground() -> Self {
        let mut m = Matrix3c::zeros();
        m[(0, 0)] = C64::new(0.5, 0.0);
        m[(1, 1)] = C64::new(0.5, 0.0);
        Self(m)
    }

    pub fn from_pure(psi: &Vector3<C64>) -> Result<Self> {
        let n = psi.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("state vector norm {n} != 1")));
        }
        Ok(Self(psi * psi.adjoint()))
    }

    /// Embeds a ground-manifold ket as a three-level pure state.
    pub fn from_ground_ket(psi: &Vector2<C64>) -> Result<Self> {
        Self::from_pure(&Vector3::new(psi[0], psi[1], C64::ZERO))
    }

    /// `|D⟩⟨D|` for a drive with the given relative phase.
    pub fn dark(relative_phase: f64) -> Self {
        Self::from_ground_ket(&dark_ket(relative_phase)).expect("dark ket is normalized")
    }

    pub fn bright(relative_phase: f64) -> Self {
        Self::from_ground_ket(&bright_ket(relative_phase)).expect("bright ket is normalized")
    }

    pub fn matrix(&self) -> &Matrix3c {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn population(&self, level: Level) -> f64 {
        let k = level as usize;
        self.0[(k, k)].re
    }

    pub fn populations(&self) -> [f64; 3] {
        [self.0[(0, 0)].re, self.0[(1, 1)].re, self.0[(2, 2)].re]
    }

    pub fn element(&self, row: Level, col: Level) -> C64 {
        self.0[(row as usize, col as usize)]
    }

    /// Ground coherence `ρ₀₁ = ⟨0|ρ|1⟩`.
    pub fn ground_coherence(&self) -> C64 {
        self.0[(0, 1)]
    }

    /// `factor·ρ` for `factor ∈ [0, 1]`, e.g. the `½ρ_D` half of an initialized
    /// ensemble.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(0.0..=1.0 + TRACE_TOL).contains(&factor) {
            return Err(Error::Validation(format!(
                "scale factor {factor} outside [0, 1]"
            )));
        }
        Ok(Self(self.0.scale(factor)))
    }

    /// `Σ wᵢ ρᵢ` for non-negative weights summing to at most one, accumulated
    /// in iteration order.
    pub fn weighted_sum<'a>(terms: impl IntoIterator<Item = (f64, &'a DensityMatrix3)>) -> Self {
        let mut acc = Matrix3c::zeros();
        for (w, rho) in terms {
            acc += rho.0.scale(w);
        }
        Self(acc)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::new(self.0 + other.0)
    }

    /// The `(|0⟩, |1⟩)` block, as seen by a probe that ignores `|e⟩`.
    pub fn ground_block(&self) -> GroundQubitState {
        GroundQubitState(self.0.fixed_view::<2, 2>(0, 0).into_owned())
    }

    pub fn validate(&self) -> Result<()> {
        check_state(&self.0, || min_eigenvalue3(&self.0), "DensityMatrix3")
    }

    pub fn to_text(&self) -> String {
        matrix_to_text(self.0.as_slice(), 3)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let v = matrix_from_text(text, 3)?;
        Self::new(Matrix3c::from_row_slice(&v))
    }
}

/// Possibly sub-normalized 2×2 state over `(|0⟩, |1⟩)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundQubitState(Matrix2c);

impl GroundQubitState {
    pub fn new(m: Matrix2c) -> Result<Self> {
        check_state(&m, || min_eigenvalue2(&m), "GroundQubitState")?;
        Ok(Self(m))
    }

    pub fn from_ket(psi: &Vector2<C64>) -> Result<Self> {
        let n = psi.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("state vector norm {n} != 1")));
        }
        Ok(Self(psi * psi.adjoint()))
    }

    /// Sub-normalized pure state `weight·|ψ⟩⟨ψ|`.
    pub fn weighted_ket(psi: &Vector2<C64>, weight: f64) -> Result<Self> {
        Self::new(Self::from_ket(psi)?.0.scale(weight))
    }

    /// `(tr·I + x X + y Y + z Z)/2`.
    pub fn from_bloch(trace: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let m = (Matrix2c::identity().scale(trace)
            + pauli_x().scale(x)
            + pauli_y().scale(y)
            + pauli_z().scale(z))
        .scale(0.5);
        Self::new(m)
    }

    pub fn matrix(&self) -> &Matrix2c {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `(tr(Xρ), tr(Yρ), tr(Zρ))`.
    pub fn bloch_vector(&self) -> [f64; 3] {
        let r01 = self.0[(0, 1)];
        [
            2.0 * r01.re,
            -2.0 * r01.im,
            self.0[(0, 0)].re - self.0[(1, 1)].re,
        ]
    }

    /// Fidelity against a pure target. The weight missing from a
    /// sub-normalized block is counted as fully mixed ground population, so a
    /// state `½|D⟩⟨D|` scores 0.75 against `|D⟩`.
    pub fn fidelity(&self, target: &Vector2<C64>) -> Result<f64> {
        let n = target.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("target norm {n} != 1")));
        }
        let tr = self.trace();
        if tr.abs() < 1e-12 {
            return Err(Error::UndefinedFidelity);
        }
        let overlap = (target.adjoint() * self.0 * target)[(0, 0)].re;
        Ok((overlap + 0.5 * (1.0 - tr)).clamp(0.0, 1.0))
    }

    /// Trace-one completion `ρ + (1 - tr ρ)·I/2` used by [`Self::fidelity`].
    pub fn completed(&self) -> GroundQubitState {
        let fill = 0.5 * (1.0 - self.trace());
        Self(self.0 + Matrix2c::identity().scale(fill))
    }

    /// Uhlmann fidelity between the trace-one completions of two states,
    /// `tr(ρσ) + 2√(det ρ · det σ)` in the qubit case.
    pub fn state_fidelity(&self, other: &GroundQubitState) -> f64 {
        let a = self.completed().0;
        let b = other.completed().0;
        let tr = (a * b).trace().re;
        let det = (a.determinant().re * b.determinant().re).max(0.0);
        (tr + 2.0 * det.sqrt()).clamp(0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        check_state(&self.0, || min_eigenvalue2(&self.0), "GroundQubitState")
    }

    pub fn to_text(&self) -> String {
        matrix_to_text(self.0.as_slice(), 2)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let v = matrix_from_text(text, 2)?;
        Self::new(Matrix2c::from_row_slice(&v))
    }
}

/// `½ Σ|λᵢ(a - b)|`; both states must carry the same trace.
pub fn trace_distance(a: &GroundQubitState, b: &GroundQubitState) -> Result<f64> {
    let (ta, tb) = (a.trace(), b.trace());
    if (ta - tb).abs() > TRACE_TOL {
        return Err(Error::TraceMismatch(ta, tb));
    }
    let d = a.0 - b.0;
    // Hermitian 2×2: eigenvalues m ± r
    let mean = 0.5 * (d[(0, 0)].re + d[(1, 1)].re);
    let half_diff = 0.5 * (d[(0, 0)].re - d[(1, 1)].re);
    let r = (half_diff * half_diff + d[(0, 1)].norm_sqr()).sqrt();
    Ok(0.5 * ((mean + r).abs() + (mean - r).abs()))
}

/// Trace distance between three-level states, used for whole-state checks.
pub fn trace_distance3(a: &DensityMatrix3, b: &DensityMatrix3) -> f64 {
    let d = a.0 - b.0;
    let herm = (d + d.adjoint()).scale(0.5);
    0.5 * SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .sum::<f64>()
}

fn format_complex(z: C64) -> String {
    // adding +0.0 turns a signed zero into +0
    let (re, im) = (z.re + 0.0, z.im + 0.0);
    let sign = if im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", re, sign, im.abs())
}

fn parse_complex(tok: &str) -> Result<C64> {
    let body = tok
        .strip_suffix('i')
        .ok_or_else(|| Error::Parse(format!("element `{tok}` lacks trailing `i`")))?;
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'))
        .ok_or_else(|| Error::Parse(format!("element `{tok}` is not of the form re+im i")))?;
    let re: f64 = body[..split]
        .parse()
        .map_err(|_| Error::Parse(format!("bad real part in `{tok}`")))?;
    let im: f64 = body[split..]
        .trim_start_matches('+')
        .parse()
        .map_err(|_| Error::Parse(format!("bad imaginary part in `{tok}`")))?;
    Ok(C64::new(re, im))
}

/// Row-major text, one matrix row per line, elements as `re+im i`.
/// `column_major` is nalgebra's storage order.
fn matrix_to_text(column_major: &[C64], n: usize) -> String {
    let mut out = String::new();
    for r in 0..n {
        let row: Vec<String> = (0..n)
            .map(|c| format_complex(column_major[c * n + r]))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

fn matrix_from_text(text: &str, n: usize) -> Result<Vec<C64>> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != n {
        return Err(Error::Parse(format!(
            "expected {n} rows, found {}",
            rows.len()
        )));
    }
    let mut out = Vec::with_capacity(n * n);
    for row in rows {
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.len() != n {
            return Err(Error::Parse(format!("expected {n} columns in `{row}`")));
        }
        for t in toks {
            out.push(parse_complex(t)?);
        }
    }
    Ok(out)
}
