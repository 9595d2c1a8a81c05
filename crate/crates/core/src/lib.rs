//! Certified discretization of non-autonomous evolutionary equations
//! `(D M0(t) + M1(t) + A) U = F` in exponentially weighted space-time.
//!
//! The time derivative is a backward difference on a uniform grid weighted by
//! `exp(-2 rho t)`. Well-posedness is certified by the accretivity margin of the assembled
//! operator (Lipschitz coefficients) or of its `M0^1/2`-sandwiched form (bounded measurable
//! coefficients commuting with `A`), and the system is solved causally by time marching.

// `!(x > 0.0)` also rejects NaN, which is the intent at every use.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod derivative;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod material;
pub mod operator;
pub mod solver;
pub mod spatial;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{weighted_inner, weighted_norm, GridFunction, TimeGrid};
pub use material::{MaterialLaw, Regime};
pub use operator::{Certificate, SpaceTimeOperator};
pub use solver::{Scenario, SolveReport};
pub use spatial::{SpatialOperator, TransportSpec};
