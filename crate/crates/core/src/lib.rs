//! Numerics for the one-dimensional stochastic heat equation driven by
//! Gaussian noise that is white in time and fractional (Hurst `H < 1/2`)
//! in space.
//!
//! The crate is organized bottom-up:
//!
//! * [`constants`] closed-form constants and covariance kernels,
//! * [`sampler`] exact and circulant Gaussian path samplers,
//! * [`spectral`] deterministic spectral-domain second moments and integral checks,
//! * [`solver`] a periodic pseudo-spectral exponential Euler solver,
//! * [`stats`] and [`estimate`] path statistics and parameter inference,
//! * [`io`] CSV and binary matrix containers.

pub mod constants;
pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod solver;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use model::{InitialCondition, ModelParams, RegularityMeta, SigmaSpec};
pub use rng::SeedStream;
pub use sampler::{PathSample, TimeGrid};
