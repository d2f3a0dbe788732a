//! Gaussian filtering and smoothing on linear state-space models.
//!
//! Two interchangeable recursions are provided. The covariance form
//! ([`predict`], [`update`], [`rts_smooth`]) manipulates covariance matrices
//! directly. The square-root form ([`sqrt_predict`], [`sqrt_update`],
//! [`sqrt_smooth`]) only ever propagates lower-triangular factors through QR
//! decompositions of stacked factors, so covariances stay positive
//! semidefinite even when the problem is badly conditioned.

mod kalman;
mod model;
mod sampling;
mod sqrt;

pub use kalman::{filter, predict, rts_smooth, update};
pub use model::{FilterStep, FilterTrajectory, GaussianTransition, Innovation, LinearObservationModel};
pub use sampling::sample_posterior;
pub(crate) use sampling::BackwardConditional;
pub use sqrt::{sqrt_filter, sqrt_predict, sqrt_smooth, sqrt_smooth_step, sqrt_update};
