//! Adaptive finite-element computation of Frank-Oseen director fields.
//!
//! The crate discretizes the director with Q2 elements (and the Lagrange
//! multiplier, when used, with Q1) on hierarchically refined quadrilateral
//! meshes. Equilibria are found with damped Newton iteration inside a
//! nested-iteration loop, and element-wise residual estimators drive the
//! adaptive refinement.

pub mod amr;
pub mod boundary;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod io;
pub mod mesh;
pub mod physics;
pub mod problems;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};

/// Plain 2D point.
pub type Point = [f64; 2];
/// Director-valued quantity.
pub type Vec3 = [f64; 3];
