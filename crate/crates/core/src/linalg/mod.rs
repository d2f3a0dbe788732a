//! Probabilistic linear solvers for symmetric positive-definite systems.
//!
//! [`problinsolve`] runs a loop of policy → information operator → belief
//! update until a stopping criterion fires. Every stage is a trait object in
//! [`SolverComponents`] and can be replaced.

mod components;
mod matrix_based;
mod solver;
mod system;

pub use components::{
    stopping_check, BeliefUpdate, ConjugatePolicy, InformationOp, MatVec, Policy, PriorCovariance,
    SolutionConditioning, SolutionPrior, SolverComponents, SolverState, StoppingConfig, StoppingCriterion,
    StoppingReason,
};
pub use matrix_based::matrix_based_update;
pub use solver::{problinsolve, solution_belief_update, SolutionBelief};
pub use system::LinearSystem;
