//! Bayesian quadrature.
//!
//! A Gaussian-process prior with squared-exponential kernel is placed on the
//! integrand; integrating the posterior against the measure gives a Gaussian
//! belief over the integral. Kernel means and the initial error are available
//! in closed form for Gaussian and (box) Lebesgue measures.

mod bq;
mod kernel;
mod measure;

pub use bq::{
    bayesian_monte_carlo, bq_integrate, lengthscale_grid, optimize_lengthscale, output_scale_mle,
    profile_log_likelihood, BqState, LengthscaleFit,
};
pub use kernel::SquaredExpKernel;
pub use measure::{Integrand, Measure, QuadProblem};
