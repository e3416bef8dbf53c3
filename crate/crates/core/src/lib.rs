//! Certified break of radial symmetry for attractive-repulsive interaction
//! energies `E[rho] = 1/2 ∫∫ W(x - y) drho(y) drho(x)`.
//!
//! The crate reduces energies of radial measures to one-dimensional shell
//! integrals, bounds them from below, and compares the bound with the energy
//! of explicit non-radial competitors (Dirac masses or small balls at the
//! vertices of a unit simplex). A strict gap certifies that no minimizer is
//! radially symmetric. The [`minimizer`] module runs particle gradient descent
//! to exhibit such minimizers empirically.

pub mod certificate;
pub mod error;
pub mod measures;
pub mod minimizer;
pub mod potential;
pub mod quadrature;
pub mod radial_energy;
pub mod sampling;

pub use error::{Error, Result};
pub use potential::{Composite, Prototype, RadialFunction, RadialPotential, Tabulated};
pub use quadrature::{QuadratureMethod, QuadratureSpec};
