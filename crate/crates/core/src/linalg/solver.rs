use nalgebra::{DMatrix, DVector};

use super::components::{PriorCovariance, SolutionPrior, SolverComponents, SolverState, StoppingReason};
use super::matrix_based::matrix_based_update;
use super::system::LinearSystem;
use crate::dense::{self, max_diag, symmetrize};
use crate::error::{argument, numerical, Error, Result};
use crate::randvars::{Gaussian, MatrixGaussian};

const HUTCHINSON_PROBES: usize = 10;
const HUTCHINSON_SEED: u64 = 0x7ace;

/// Output of [`problinsolve`].
#[derive(Debug, Clone)]
pub struct SolutionBelief {
    /// Posterior belief over the solution.
    pub x: Gaussian,
    /// Posterior belief over `A⁻¹`, if requested.
    pub ainv: Option<MatrixGaussian>,
    pub iterations: usize,
    /// Mean after each iteration; entry 0 is the prior mean.
    pub mean_iterates: Vec<DVector<f64>>,
    /// `‖b − A·mean‖` after each iteration; entry 0 is for the prior mean.
    pub residual_norms: Vec<f64>,
    /// Solution covariance trace per iteration. Empty unless the prior trace
    /// was available (always for explicit priors; for the implicit inverse
    /// only when a trace-based stopping rule is active).
    pub cov_traces: Vec<f64>,
    /// Search directions `s_i`.
    pub directions: Vec<DVector<f64>>,
    /// Observations `A·s_i`.
    pub observations: Vec<DVector<f64>>,
    pub stopping_reason: StoppingReason,
}

/// Solves `A·x = b` by iterated Gaussian conditioning.
///
/// With the default prior (zero mean, implicit-inverse covariance) and the
/// default components, the mean after `k` iterations is the `k`-th conjugate
/// gradient iterate.
pub fn problinsolve(
    system: &LinearSystem,
    prior: Option<SolutionPrior>,
    components: Option<SolverComponents>,
) -> Result<SolutionBelief> {
    let n = system.dim();
    let prior = prior.unwrap_or_else(|| SolutionPrior::default_for(n));
    check_prior(&prior, n)?;
    let components = components.unwrap_or_default();

    let needs_trace = components.stopping.iter().any(|c| c.needs_cov_trace());
    let prior_trace = match &prior.cov {
        PriorCovariance::ScaledIdentity(alpha) => Some(alpha * n as f64),
        PriorCovariance::Operator(op) => Some(op.to_dense()?.trace()),
        PriorCovariance::ImplicitInverse if needs_trace => Some(dense_inverse(system)?.trace()),
        PriorCovariance::ImplicitInverse => None,
    };

    let mut state = SolverState {
        iteration: 0,
        residual: system.residual(&prior.mean)?,
        mean: prior.mean.clone(),
        directions: Vec::new(),
        observations: Vec::new(),
        downdates: Vec::new(),
        cov_trace: prior_trace,
    };
    let mut mean_iterates = vec![state.mean.clone()];
    let mut residual_norms = vec![state.residual.norm()];
    let mut cov_traces: Vec<f64> = state.cov_trace.into_iter().collect();
    let mut norm_estimate = system.norm_estimate();

    let stopping_reason = loop {
        if let Some(reason) = components.stopping.iter().find_map(|c| c.check(&state, system)) {
            break reason;
        }
        let k = state.iteration + 1;
        let s = components.policy.direction(&state, system)?;
        if s.iter().any(|v| !v.is_finite()) || s.norm() == 0.0 {
            return Err(numerical(format!(
                "policy returned a degenerate direction at iteration {k}"
            )));
        }
        let y = components.information_op.observe(system, &s)?;
        let curvature = s.dot(&y);
        norm_estimate = norm_estimate.max(curvature / s.norm_squared());
        if !(curvature > 1e-14 * s.norm_squared() * norm_estimate) {
            return Err(numerical(format!(
                "breakdown at iteration {k}: sᵀA·s = {curvature:e} for ‖s‖ = {:e}",
                s.norm()
            )));
        }
        components
            .belief_update
            .update(&mut state, &prior.cov, system, &s, &y)?;
        state.iteration = k;
        mean_iterates.push(state.mean.clone());
        residual_norms.push(state.residual.norm());
        if let Some(t) = state.cov_trace {
            cov_traces.push(t);
        }
    };

    let x = posterior_belief(system, &prior, &state)?;
    let ainv = if components.infer_inverse {
        Some(inverse_belief(system, &state)?)
    } else {
        None
    };
    Ok(SolutionBelief {
        x,
        ainv,
        iterations: state.iteration,
        mean_iterates,
        residual_norms,
        cov_traces,
        directions: state.directions,
        observations: state.observations,
        stopping_reason,
    })
}

fn check_prior(prior: &SolutionPrior, n: usize) -> Result<()> {
    if prior.mean.len() != n {
        return Err(argument(format!(
            "prior mean has length {}, expected {n}",
            prior.mean.len()
        )));
    }
    if prior.mean.iter().any(|v| !v.is_finite()) {
        return Err(argument("prior mean has non-finite entries"));
    }
    match &prior.cov {
        PriorCovariance::ScaledIdentity(alpha) if !(*alpha > 0.0 && alpha.is_finite()) => Err(argument(format!(
            "prior covariance scale must be positive, got {alpha}"
        ))),
        PriorCovariance::Operator(op) if op.shape() != (n, n) => Err(argument(format!(
            "prior covariance operator has shape {:?}, expected ({n}, {n})",
            op.shape()
        ))),
        _ => Ok(()),
    }
}

fn dense_inverse(system: &LinearSystem) -> Result<DMatrix<f64>> {
    let n = system.dim();
    let a = system.a().to_dense()?;
    Ok(symmetrize(&dense::solve_psd(&a, &DMatrix::identity(n, n))?))
}

fn stack(columns: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    if columns.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(columns)
    }
}

/// Dense posterior over `x`.
///
/// The covariance is assembled as `(I − K·Yᵀ)·Σ₀·(I − K·Yᵀ)ᵀ` with
/// `K = Σ₀·Y·(YᵀΣ₀Y)⁻¹`, which stays PSD under roundoff. The implicit
/// inverse prior is materialized here, once.
fn posterior_belief(system: &LinearSystem, prior: &SolutionPrior, state: &SolverState) -> Result<Gaussian> {
    let n = system.dim();
    let sigma0 = match &prior.cov {
        PriorCovariance::ImplicitInverse => dense_inverse(system)?,
        PriorCovariance::ScaledIdentity(alpha) => DMatrix::identity(n, n) * *alpha,
        PriorCovariance::Operator(op) => symmetrize(&op.to_dense()?),
    };
    let scale = max_diag(&sigma0);
    if state.directions.is_empty() {
        return Gaussian::derived(state.mean.clone(), sigma0, scale);
    }
    let y = stack(&state.observations, n);
    let sigma_y = match &prior.cov {
        PriorCovariance::ImplicitInverse => stack(&state.directions, n),
        _ => &sigma0 * &y,
    };
    let gram = symmetrize(&(y.transpose() * &sigma_y));
    let gain = dense::solve_psd(&gram, &sigma_y.transpose())?.transpose();
    let contraction = DMatrix::identity(n, n) - gain * y.transpose();
    let cov = symmetrize(&(&contraction * sigma0 * contraction.transpose()));
    Gaussian::derived(state.mean.clone(), cov, scale)
}

/// Matrix-variate belief over `A⁻¹` with prior `H₀ = W = (n / tr̂ A)·I`.
fn inverse_belief(system: &LinearSystem, state: &SolverState) -> Result<MatrixGaussian> {
    let n = system.dim();
    let trace = system.trace_estimate(HUTCHINSON_PROBES, HUTCHINSON_SEED)?;
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(numerical(format!("trace estimate of A is not positive: {trace:e}")));
    }
    let h0 = DMatrix::identity(n, n) * (n as f64 / trace);
    let prior = MatrixGaussian::new(h0.clone(), h0, true)?;
    if state.directions.is_empty() {
        return Ok(prior);
    }
    matrix_based_update(&prior, &stack(&state.directions, n), &stack(&state.observations, n))
}

/// Conditions a solution belief on the projected equation `sᵀA·x = sᵀb`,
/// observed through `y = A·s`.
pub fn solution_belief_update(belief: &Gaussian, s: &DVector<f64>, y: &DVector<f64>, b_proj: f64) -> Result<Gaussian> {
    let n = belief.dim();
    if s.len() != n || y.len() != n {
        return Err(argument(format!(
            "direction and observation must have length {n}, got {} and {}",
            s.len(),
            y.len()
        )));
    }
    if s.iter().all(|&v| v == 0.0) {
        return Err(argument("search direction must be nonzero"));
    }
    let h = DMatrix::from_row_slice(1, n, y.as_slice());
    belief
        .condition_on_linear_observation(&h, &DMatrix::zeros(1, 1), &DVector::from_element(1, b_proj))
        .map_err(|e| match e {
            Error::Numerical(msg) => numerical(format!(
                "{msg}; the direction carries no new information (policy breakdown)"
            )),
            other => other,
        })
}
