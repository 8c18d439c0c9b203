//! Simulation of all-optical EIT spin echoes in three-level Λ systems.
//!
//! The crate propagates the Lindblad master equation for one Λ system through
//! pulse/wait sequences, averages over inhomogeneous detuning ensembles, and
//! provides the analysis used on the resulting echoes: state tomography of the
//! ground qubit, beat-note readout, decay fits and parameter studies.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod lambda;
pub mod qstate;
pub mod readout;
pub mod sequences;
pub mod studies;
pub mod tomography;

pub use error::{Error, Result};
pub use lambda::LambdaParams;
pub use qstate::{DensityMatrix3, GroundQubitState};
