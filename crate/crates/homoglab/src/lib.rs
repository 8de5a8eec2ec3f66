//! Numerical laboratory for spectra of high-contrast periodic media.
//!
//! The crate assembles finite element models of a second-order operator on
//! the unit square whose coefficient is periodic with period ε and carries a
//! small weight δ on a lattice of inclusions. It computes the fine spectrum,
//! the homogenized tensor with its correctors, the inclusion (Bloch) modes,
//! the secular function whose roots describe the residual spectrum of the
//! limit operator, and discrete two-scale transforms with certified
//! approximation rates.

pub mod banded;
pub mod cell;
pub mod coefficients;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod eigen;
pub mod inclusion;
pub mod limit;
pub mod solver;
pub mod sparse;
pub mod unfolding;

pub use error::{Error, Result};
