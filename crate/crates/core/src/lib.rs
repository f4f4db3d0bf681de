//! Lagrangian solver for viscous compressible barotropic flow.
//!
//! The crate evolves small perturbations `(theta, v)` of a constant state
//! `rho_*` in Lagrangian coordinates. Each Picard iterate assembles the
//! nonlinear terms from the previous iterate, solves a time-shifted linear
//! Stokes system and a compensation system by Duhamel's formula, and measures
//! the result in weighted space-time norms.
//!
//! Two domains are supported: a periodic box standing in for the whole space
//! (Fourier operators, exact per-mode exponentials) and a spherically
//! symmetric shell with no-slip walls (staggered finite differences).

pub mod decay;
pub mod error;
pub mod lagrangian;
pub mod linstokes;
pub mod model;
pub mod nonlinear;
pub mod norms;
pub mod scheme;

pub use error::{Error, Result};
