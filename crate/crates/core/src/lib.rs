//! Numerical core for one-dimensional stochastic heat and Burgers equations
//! driven by a stochastic measure, solved in mild (Duhamel) form.
//!
//! The pieces, bottom-up:
//!
//! * [`grid`]: the truncated space-time lattice, fields and their norms.
//! * [`measure`]: finite-resolution realizations of stochastic measures and the
//!   dyadic functionals built from them.
//! * [`heat`]: heat kernel, its derivative, and the semigroup / Duhamel
//!   operators `J1` and `J2`.
//! * [`besov`]: discrete Besov `B^α_{2,2}` norms, Hölder exponent fits and the
//!   pathwise dyadic bound for integrals against a measure.
//! * [`convolution`]: the stochastic convolution `ϑ(t,x)` and its diagnostics.
//! * [`solver`]: cutoff projection, the Picard iteration and the a-priori
//!   radius heuristic.
//! * [`averaging`]: time-averaged noise coefficients and the averaging
//!   experiment.

pub mod averaging;
pub mod besov;
pub mod convolution;
mod error;
pub mod grid;
pub mod heat;
pub mod measure;
pub mod quadrature;
pub mod solver;
mod sum;

pub use error::{Error, Result};
pub use grid::{Field, GridSpec, SpaceTimeField};
pub use measure::{MeasureKind, MeasureSample};
