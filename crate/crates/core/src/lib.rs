//! Learning sensor allocations for unknown linear systems from partially
//! observed trajectories.
//!
//! The crate covers the whole numerical pipeline:
//!
//! * [`linsys`]: system models, noisy trajectory simulation, ground-truth
//!   Markov parameters.
//! * [`measurement`]: one-hot measurement matrices and cyclic data-collection
//!   schedules.
//! * [`sysid`]: row-wise least-squares estimation of Markov parameters from
//!   many partially observed trajectories, and recovery of `(A, B)` either
//!   directly or through Ho-Kalman realization.
//! * [`allocation`]: thresholded rank estimation and greedy sensor allocation.
//! * [`oracle`]: brute-force references (exact ranks, exhaustive minimal
//!   sensor sets, the matrix-power perturbation bound).
//! * [`models`]: the block-cyclic and HVAC benchmark systems.
//!
//! The crate is `no_std` and only needs `alloc`. The default `std` feature
//! switches nalgebra to its blocked matrix multiply.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod allocation;
mod error;
pub mod linalg;
pub mod linsys;
pub mod measurement;
pub mod models;
pub mod oracle;
pub mod sysid;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
