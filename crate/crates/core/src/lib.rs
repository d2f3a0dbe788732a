//! Probabilistic numerical solvers.
//!
//! Linear systems, ordinary differential equations and integrals are solved
//! by Gaussian inference: each solver returns a [`randvars::Gaussian`] belief
//! over the quantity of interest instead of a point estimate.
//!
//! - [`linalg`]: probabilistic linear solvers for symmetric positive-definite systems
//! - [`diffeq`]: ODE filters and perturbed Runge–Kutta solvers
//! - [`quad`]: Bayesian quadrature and Bayesian Monte Carlo
//! - [`filtsmooth`], [`linops`], [`randvars`]: the supporting building blocks
//! - [`problems`]: reference problems and their JSON descriptions

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dense;
pub mod diffeq;
pub mod error;
pub mod filtsmooth;
pub mod linalg;
pub mod linops;
pub mod problems;
pub mod quad;
pub mod randvars;

pub use error::{Error, Result};
