//! Spectral band hierarchy, density of states and dimension estimates for
//! Sturm Hamiltonians whose frequency has an eventually constant continued fraction.

// Matrix code indexes rows and columns together; iterator rewrites read worse.
#![allow(clippy::needless_range_loop)]

pub mod asymptotics;
pub mod bands;
pub mod coding;
pub mod dosmeasure;
pub mod error;
pub mod multifractal;
pub mod numkernel;
pub mod thermo;

pub use error::{Error, Result};
