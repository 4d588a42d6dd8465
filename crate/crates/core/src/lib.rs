//! Soft-sphere Lorentz gas in the weak-coupling regime.
//!
//! A light particle moves through a Poisson field of radial bumps of range `ε`,
//! strength `ε^α` and density `ρ ε^{−2α−1}`. The crate integrates the microscopic
//! dynamics, tabulates single-obstacle scattering, computes the velocity
//! diffusion constant by several routes and solves the limiting kinetic equations.

pub mod coefficients;
pub mod cutoffs;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod geom;
pub mod interp;
pub mod kinetic;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod scattering;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use geom::Vec2;
pub use potential::{PotentialModel, Profile};
