//! Pseudospectral simulation and verification of the nonlinear Schrodinger
//! equation with piecewise-constant, periodic dispersion management,
//!
//! ```text
//! i u_t + gamma(t / eps) Delta u + |u|^{p-1} u = 0,
//! ```
//!
//! on a periodic box. The crate provides the exact linear propagator, a
//! breakpoint-aware Strang integrator, a ground-state solver, closed-form
//! reference solutions and the experiment drivers built on top of them.
//!
//! Everything numerical is generic over [`Real`]; the `*64` / `*32` aliases
//! below pick a precision.

// `!(x > 0)` style checks are meant to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod dispersion;
pub mod error;
pub mod groundstate;
pub mod lab;
pub mod linear;
pub mod reference;
pub mod scalar;
pub mod solver;
pub mod spectral;

pub use dispersion::{Breakpoint, ConstantDispersion, DispersionMap, DispersionSchedule, Reversed, SwitchKind};
pub use error::{CheckpointError, Error, Result};
pub use scalar::{Complex, Real};
pub use spectral::{Field, Grid, Representation};

pub type DispersionMap64 = DispersionMap<f64>;
pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;

pub type DispersionMap32 = DispersionMap<f32>;
pub type Grid32 = Grid<f32>;
pub type Field32 = Field<f32>;
