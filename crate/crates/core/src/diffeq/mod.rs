//! Probabilistic ODE solvers.
//!
//! The ODE filter ([`solve_ivp`]) treats the solution as an integrated
//! Wiener process and conditions it on `ẏ = f(y, t)` at the grid points by
//! extended Kalman filtering and smoothing. The perturbed solver
//! ([`perturbed_solve`]) randomizes the step sizes of a classic Runge–Kutta
//! method and reports an ensemble.

mod init;
mod ivp;
mod odefilter;
mod perturbed;
mod prior;
mod solve;

pub use init::taylor_init;
pub use ivp::{Ivp, Jacobian, VectorField};
pub use odefilter::{
    adapt_step, calibrate_diffusion, ek_linearize, odefilter_step, EkMode, OdeStep, StepDecision, StepResidual,
};
pub use perturbed::{perturbed_solve, rk_solve, Member, PerturbedSolution, RkMethod};
pub use prior::{iwp_discretize, precondition, IwpPrior, Preconditioned};
pub use solve::{solve_ivp, OdePosterior, OdeSolverOptions, StepControl, StepRecord};
