//! Gaussian spin-weighted random fields on SO(3) and the Lipschitz-Killing
//! curvatures of their excursion sets: exact expectations, geometric
//! estimators on Euler-angle grids, and a Monte Carlo harness tying them together.

pub mod cli;
pub mod error;
pub mod expectations;
pub mod lkestim;
pub mod mc;
pub mod so3geom;
pub mod spinfield;
pub mod wigner;

pub use error::{Error, Result};
