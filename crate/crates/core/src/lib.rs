//! Robust scatter estimation for complex elliptically symmetric data.
//!
//! M-estimators and their eigendecomposition asymptotics, in the standard
//! regime and relative to the Gaussian-core Wishart equivalent (GCWE), plus
//! the low-rank projector, intrinsic bias and Cramér-Rao bound applications.

pub mod asymptotics;
pub mod ces;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod low_rank;
pub mod mestimator;
pub mod riemannian;
pub mod rng;

pub use error::{Error, Result};
