//! Krylov-space diagnostics for disordered non-Hermitian XY spin chains.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! * [`model`] — dense Hamiltonian assembly, disorder sampling, initial state;
//! * [`bilanczos`] — bi-orthogonal Lanczos tridiagonalization with complete
//!   reorthogonalization;
//! * [`krylov_dynamics`] — wave-function evolution on the Krylov chain,
//!   complexity and inverse participation ratio;
//! * [`lanczos_metrics`] — Krylov variance, reciprocity, coefficient profiles;
//! * [`spectral`] — complex eigenvalues, complex spacing-ratio statistics,
//!   reference random-matrix ensembles;
//! * [`entanglement`] — eigenstate entanglement entropy statistics;
//! * [`scaling`] — finite-size scaling collapse and critical-point extraction;
//! * [`ensemble`] — disorder-averaged sweeps over `(L, W_gamma)` grids.

pub mod bilanczos;
pub mod ensemble;
pub mod entanglement;
pub mod error;
pub mod krylov_dynamics;
pub mod lanczos_metrics;
pub mod model;
pub mod scaling;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
