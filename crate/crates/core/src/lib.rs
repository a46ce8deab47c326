//! Spin-phonon relaxation for a two-level molecular spin.
//!
//! The pipeline runs from externally computed vibrational data to relaxation
//! times:
//!
//! 1. [`ingest`] reads normal modes (`NMODES v1`), plans displaced geometries
//!    for the electronic-structure engine and loads the resulting g-tensors.
//! 2. [`couplings`] turns displaced g-tensors into first- and second-order
//!    derivatives with respect to dimensionless normal coordinates.
//! 3. [`relaxation`] builds the direct and two-phonon relaxation tensors,
//!    projects T1/T2, attributes contributions to modes and sweeps grids.
//! 4. [`dynamics`] integrates the two-level density matrix under the Lindblad
//!    and Bloch-Redfield generators to cross-check the analytic rates.
//!
//! Frequencies, couplings and rates are carried in cm⁻¹ throughout; times are
//! reported in μs.

pub mod couplings;
pub mod dynamics;
mod error;
pub mod exec;
pub mod fixtures;
pub mod ingest;
pub mod physics;
pub mod relaxation;

pub use error::{Error, Result};
pub use exec::Execution;
pub use physics::{BathSpec, GTensor, Geometry, ModeSet, RamanPairing, SpinSystem};
