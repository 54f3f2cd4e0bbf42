//! Complex elliptically symmetric (CES) sampling, the complex sample
//! covariance matrix, and the closed-form second-order theory of affine
//! equivariant scatter statistics, with a Monte Carlo harness that checks
//! the closed forms against empirical moments.

pub mod ces_sampler;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod io;
pub mod lin_core;
pub mod mc_verify;
pub mod theory;

pub use error::{Error, Result};
pub use lin_core::{ComplexMatrix, ComplexVector, HermitianMatrix};
