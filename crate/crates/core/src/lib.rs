//! Diffusion probabilistic LMS (DPLMS) for distributed estimation over
//! sensor networks with impulsive measurement noise.
//!
//! * [`network`]: random and geometric topologies, combination matrices.
//! * [`signal`]: unknown system, regressors, Bernoulli-Gaussian noise.
//! * [`filters`]: PLMS recursions, DPLMS / DLMS / DSE-LMS diffusion, op counts.
//! * [`analysis`]: MSD, mean-error recursion, stability bound.
//! * [`harness`]: config-driven Monte Carlo experiments and CSV output.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod filters;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod signal;

pub use error::{ConfigError, Error, Result};
