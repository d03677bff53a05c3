//! Simulator for single-boson nonlocality experiments.
//!
//! A single boson delocalized over two sites `A` and `B` carries EPR-type
//! correlations in its relative phase. The crate builds the full chain that
//! reads those correlations out locally (excitation swap onto two-level
//! systems, coherent-drive rotations, projective measurement) and checks
//! whether a phase kick applied in a third region changes the joint
//! statistics at `A ∪ B`:
//!
//! * [`hilbert`]: composite Hilbert spaces, state vectors, local operators,
//!   partial traces and fidelities.
//! * [`dynamics`]: Jaynes–Cummings and free Hamiltonians, unitary evolution,
//!   the ideal swap, charge operators and phase kicks.
//! * [`protocol`]: state preparation, rotations, Born-rule distributions,
//!   seeded sampling and phase estimation.
//! * [`nosignal`]: kick vs no-kick scenarios in the naive, charged and
//!   gravitational models.
//! * [`causality`]: light-cone containment test for jamming in 1+1 dimensions.

pub mod causality;
pub mod dynamics;
mod error;
pub mod hilbert;
mod linalg;
pub mod nosignal;
pub mod protocol;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Tolerance for freshly constructed objects.
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Tolerance for quantities propagated through repeated contractions.
pub const PROPAGATION_TOL: f64 = 1e-10;
