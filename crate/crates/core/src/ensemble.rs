//! Inhomogeneous averaging over optical and spin detunings.
//!
//! Members sit on a deterministic midpoint-rule grid over ±3σ of each
//! Gaussian, multiplied by the discrete Zeeman branches. Averages are
//! reduced in grid order no matter how many threads computed the members, so
//! results are bit-reproducible.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_sequence, SequenceSpec, Trajectory};
use crate::error::{Error, Result};
use crate::lambda::LambdaParams;
use crate::qstate::{DensityMatrix3, Matrix3c};

/// Members processed per parallel batch; bounds memory for large grids.
const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeemanBranch {
    /// Hz.
    pub offset: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    /// Optical inhomogeneous FWHM (Hz).
    pub optical_fwhm: f64,
    /// Spin inhomogeneous FWHM (Hz).
    pub spin_fwhm: f64,
    pub n_optical: usize,
    pub n_spin: usize,
    /// Empty means a single branch at zero offset.
    pub zeeman_branches: Vec<ZeemanBranch>,
}

impl EnsembleSpec {
    /// One member at zero detuning.
    pub fn single() -> Self {
        Self {
            optical_fwhm: 0.0,
            spin_fwhm: 0.0,
            n_optical: 1,
            n_spin: 1,
            zeeman_branches: Vec::new(),
        }
    }

    /// Two equally weighted branches at ±δf/2.
    pub fn with_split(mut self, splitting_hz: f64) -> Self {
        self.zeeman_branches = if splitting_hz == 0.0 {
            Vec::new()
        } else {
            vec![
                ZeemanBranch {
                    offset: -0.5 * splitting_hz,
                    weight: 0.5,
                },
                ZeemanBranch {
                    offset: 0.5 * splitting_hz,
                    weight: 0.5,
                },
            ]
        };
        self
    }

    pub fn member_count(&self) -> usize {
        self.n_optical * self.n_spin * self.zeeman_branches.len().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("optical_fwhm", self.optical_fwhm),
            ("spin_fwhm", self.spin_fwhm),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!(
                    "EnsembleSpec.{name} = {v} must be >= 0"
                )));
            }
        }
        for (name, n) in [("n_optical", self.n_optical), ("n_spin", self.n_spin)] {
            if n == 0 || n % 2 == 0 {
                return Err(Error::Validation(format!(
                    "EnsembleSpec.{name} = {n} must be odd and >= 1"
                )));
            }
        }
        if !self.zeeman_branches.is_empty() {
            if self
                .zeeman_branches
                .iter()
                .any(|b| !(b.weight >= 0.0 && b.weight.is_finite() && b.offset.is_finite()))
            {
                return Err(Error::Validation(
                    "Zeeman branch weights must be >= 0".into(),
                ));
            }
            let total: f64 = self.zeeman_branches.iter().map(|b| b.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "Zeeman branch weights sum to {total}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// One grid point. Detunings in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleMember {
    pub delta_opt: f64,
    pub delta_spin: f64,
    /// Zeeman part of the two-photon detuning, kept apart because it is not
    /// refocused by the rephasing pulse.
    pub zeeman_shift: f64,
    pub weight: f64,
}

impl EnsembleMember {
    /// `base` shifted by this member's detunings.
    pub fn params(&self, base: &LambdaParams) -> LambdaParams {
        LambdaParams {
            delta_opt: base.delta_opt + self.delta_opt,
            delta_spin: base.delta_spin + self.delta_spin,
            zeeman_shift: base.zeeman_shift + self.zeeman_shift,
            ..*base
        }
    }
}

/// Midpoint-rule nodes and normalized weights of a Gaussian with the given
/// FWHM (Hz) over ±3σ, returned as angular detunings.
pub fn gaussian_nodes(fwhm: f64, n: usize) -> Vec<(f64, f64)> {
    if n <= 1 || fwhm == 0.0 {
        return vec![(0.0, 1.0)];
    }
    let sigma = fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let cell = 6.0 * sigma / n as f64;
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = -3.0 * sigma + (i as f64 + 0.5) * cell;
            (x, (-0.5 * (x / sigma).powi(2)).exp())
        })
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter()
        .map(|(x, w)| (2.0 * PI * x, w / total))
        .collect()
}

/// Tensor grid over Zeeman branch × optical × spin, in that nesting order.
pub fn detuning_grid(spec: &EnsembleSpec) -> Result<Vec<EnsembleMember>> {
    spec.validate()?;
    let optical = gaussian_nodes(spec.optical_fwhm, spec.n_optical);
    let spin = gaussian_nodes(spec.spin_fwhm, spec.n_spin);
    let branches = if spec.zeeman_branches.is_empty() {
        vec![ZeemanBranch {
            offset: 0.0,
            weight: 1.0,
        }]
    } else {
        spec.zeeman_branches.clone()
    };
    let mut out = Vec::with_capacity(spec.member_count());
    for b in &branches {
        for &(dopt, wo) in &optical {
            for &(dspin, ws) in &spin {
                out.push(EnsembleMember {
                    delta_opt: dopt,
                    delta_spin: dspin,
                    zeeman_shift: 2.0 * PI * b.offset,
                    weight: b.weight * wo * ws,
                });
            }
        }
    }
    Ok(out)
}

/// Applies `f` to every member in parallel and folds the results in grid
/// order with `fold`.
pub fn map_reduce_ordered<T, A>(
    members: &[EnsembleMember],
    init: A,
    f: impl Fn(&EnsembleMember) -> Result<T> + Sync,
    mut fold: impl FnMut(A, &EnsembleMember, T) -> A,
) -> Result<A>
where
    T: Send,
{
    let mut acc = init;
    for chunk in members.chunks(BATCH) {
        let results: Vec<Result<T>> = chunk.par_iter().map(&f).collect();
        for (m, r) in chunk.iter().zip(results) {
            acc = fold(acc, m, r?);
        }
    }
    Ok(acc)
}

/// Weight-averaged trajectory of the ensemble. Observables are linear in ρ,
/// so the averaged states carry the averaged observables.
pub fn ensemble_average(
    rho0: &DensityMatrix3,
    seq: &SequenceSpec,
    base: &LambdaParams,
    spec: &EnsembleSpec,
) -> Result<Trajectory> {
    let members = detuning_grid(spec)?;
    let run = |m: &EnsembleMember| run_sequence(rho0, &m.params(base), seq);
    let acc: Option<(Trajectory, Vec<Matrix3c>)> =
        map_reduce_ordered(&members, None, run, |acc, m, tr| {
            let (shape, mut sums) = match acc {
                Some(a) => a,
                None => {
                    let n = tr.len();
                    (tr.clone(), vec![Matrix3c::zeros(); n])
                }
            };
            for (s, rho) in sums.iter_mut().zip(&tr.states) {
                *s += rho.matrix().scale(m.weight);
            }
            Some((shape, sums))
        })?;
    let (mut shape, sums) = acc.expect("grid has at least one member");
    shape.states = sums
        .into_iter()
        .map(DensityMatrix3::from_matrix_unchecked)
        .collect();
    Ok(shape)
}

/// Everything an echo run needs besides the sequence itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Physics {
    pub params: LambdaParams,
    pub ensemble: EnsembleSpec,
    /// State before the first pulse; the thermal mixed ground state by
    /// default.
    pub initial: DensityMatrix3,
}

impl Physics {
    pub fn new(params: LambdaParams, ensemble: EnsembleSpec) -> Self {
        Self {
            params,
            ensemble,
            initial: DensityMatrix3::mixed_ground(),
        }
    }

    /// Closed, resonant, single member.
    pub fn ideal() -> Self {
        Self::new(LambdaParams::closed(), EnsembleSpec::single())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.ensemble.validate()?;
        self.initial.validate()
    }

    pub fn run(&self, seq: &SequenceSpec) -> Result<Trajectory> {
        ensemble_average(&self.initial, seq, &self.params, &self.ensemble)
    }
}
