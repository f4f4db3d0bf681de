//! Parameters, grids, fields and discrete operators shared by the solver.

pub mod domain;
pub mod fft;
pub mod field;
pub mod io;
pub mod ops;
pub mod params;
pub mod quadrature;

pub use domain::DomainSpec;
pub use field::{FieldState, Frame, TrajectoryRecord};
pub use ops::{deform_tensor, div, grad, laplace, BoxOps, Ops, RadialOps};
pub use params::{pressure_deriv, ModelParams, PressureLaw, TimeExponent, Violation};
pub use quadrature::{integrate, lq_norm, sobolev_norm};
