//! Normal-bundle geometry of two-dimensional immersions in R^{n+2} on a
//! discretized unit disc: torsion coefficients and the total-torsion
//! functional, gauge descent to critical orthonormal normal sections, the
//! associated nonlinear elliptic Grassmann system, and verification of the
//! quantitative bounds tying them together.

pub mod bounds;
pub mod error;
pub mod functional;
pub mod geometry;
pub mod grassmann;
pub mod grid;
pub mod zoo;

pub use error::{Error, Result};
