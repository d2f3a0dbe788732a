use std::fmt::Debug;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::system::LinearSystem;
use crate::error::{numerical, Result};
use crate::linops::LinOp;

/// Covariance of the prior belief over the solution `x`.
#[derive(Debug, Clone, Default)]
pub enum PriorCovariance {
    /// `Σ₀ = A⁻¹`, realized through `Σ₀·(A·s) = s` without forming `A⁻¹`.
    /// With the conjugate policy this reproduces conjugate gradients.
    #[default]
    ImplicitInverse,
    /// `Σ₀ = α·I`.
    ScaledIdentity(f64),
    /// A user-supplied symmetric PSD operator.
    Operator(LinOp),
}

impl PriorCovariance {
    /// `Σ₀·y` for an observation `y = A·s`.
    pub(crate) fn apply_to_observation(&self, s: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Self::ImplicitInverse => Ok(s.clone()),
            Self::ScaledIdentity(alpha) => Ok(y * *alpha),
            Self::Operator(op) => op.apply(y),
        }
    }
}

/// Mean and covariance of the prior over the solution.
#[derive(Debug, Clone)]
pub struct SolutionPrior {
    pub mean: DVector<f64>,
    pub cov: PriorCovariance,
}

impl SolutionPrior {
    /// Zero mean with the implicit-inverse covariance.
    pub fn default_for(n: usize) -> Self {
        Self {
            mean: DVector::zeros(n),
            cov: PriorCovariance::ImplicitInverse,
        }
    }
}

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingReason {
    ResidualTol,
    PosteriorTraceTol,
    Maxiter,
}

/// Everything the components can see while the solver runs.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub iteration: usize,
    pub mean: DVector<f64>,
    /// `b − A·mean`, recomputed after each update.
    pub residual: DVector<f64>,
    pub directions: Vec<DVector<f64>>,
    /// `A·s` for each direction.
    pub observations: Vec<DVector<f64>>,
    /// Rank-one downdates `(u, γ)` with `Σ_k = Σ₀ − Σ u·uᵀ/γ`.
    pub downdates: Vec<(DVector<f64>, f64)>,
    /// `trace(Σ_k)`, when the prior trace is known.
    pub cov_trace: Option<f64>,
}

impl SolverState {
    /// `Σ_k·y` for an observation `y = A·s`.
    pub fn cov_apply_observation(
        &self,
        prior: &PriorCovariance,
        s: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let mut out = prior.apply_to_observation(s, y)?;
        for (u, gamma) in &self.downdates {
            out.axpy(-u.dot(y) / gamma, u, 1.0);
        }
        Ok(out)
    }
}

/// Chooses the next search direction.
pub trait Policy: Debug + Send + Sync {
    fn direction(&self, state: &SolverState, system: &LinearSystem) -> Result<DVector<f64>>;
}

/// Maps a search direction to observed data.
pub trait InformationOp: Debug + Send + Sync {
    fn observe(&self, system: &LinearSystem, s: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Conditions the solver state on a new `(s, A·s)` pair.
pub trait BeliefUpdate: Debug + Send + Sync {
    fn update(
        &self,
        state: &mut SolverState,
        prior: &PriorCovariance,
        system: &LinearSystem,
        s: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<()>;
}

pub trait StoppingCriterion: Debug + Send + Sync {
    fn check(&self, state: &SolverState, system: &LinearSystem) -> Option<StoppingReason>;

    /// Whether the criterion reads `state.cov_trace`.
    fn needs_cov_trace(&self) -> bool {
        false
    }
}

/// The current residual, A-conjugated against all previous directions.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConjugatePolicy;

impl Policy for ConjugatePolicy {
    fn direction(&self, state: &SolverState, _system: &LinearSystem) -> Result<DVector<f64>> {
        let mut s = state.residual.clone();
        for (sj, yj) in state.directions.iter().zip(&state.observations) {
            let coeff = yj.dot(&s) / yj.dot(sj);
            s.axpy(-coeff, sj, 1.0);
        }
        Ok(s)
    }
}

/// Noise-free matrix–vector product `y = A·s`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MatVec;

impl InformationOp for MatVec {
    fn observe(&self, system: &LinearSystem, s: &DVector<f64>) -> Result<DVector<f64>> {
        system.a().apply(s)
    }
}

/// Gaussian conditioning on `yᵀx = sᵀb`, kept in low-rank form.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolutionConditioning;

impl BeliefUpdate for SolutionConditioning {
    fn update(
        &self,
        state: &mut SolverState,
        prior: &PriorCovariance,
        system: &LinearSystem,
        s: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<()> {
        let u = state.cov_apply_observation(prior, s, y)?;
        let gamma = y.dot(&u);
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(numerical(format!(
                "zero innovation variance at iteration {}: the direction was already explored (policy breakdown)",
                state.iteration + 1
            )));
        }
        let innovation = s.dot(system.b()) - y.dot(&state.mean);
        state.mean.axpy(innovation / gamma, &u, 1.0);
        if let Some(trace) = state.cov_trace.as_mut() {
            *trace -= u.norm_squared() / gamma;
        }
        state.downdates.push((u, gamma));
        state.directions.push(s.clone());
        state.observations.push(y.clone());
        state.residual = system.residual(&state.mean)?;
        Ok(())
    }
}

/// Thresholds for [`stopping_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingConfig {
    pub atol: f64,
    pub rtol: f64,
    pub trace_tol: Option<f64>,
    /// Defaults to `10·n` when `None`.
    pub maxiter: Option<usize>,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-8,
            trace_tol: None,
            maxiter: None,
        }
    }
}

impl StoppingCriterion for StoppingConfig {
    fn check(&self, state: &SolverState, system: &LinearSystem) -> Option<StoppingReason> {
        stopping_check(state, system, self)
    }

    fn needs_cov_trace(&self) -> bool {
        self.trace_tol.is_some()
    }
}

/// Checks, in order, the residual, the posterior trace and the iteration cap.
pub fn stopping_check(state: &SolverState, system: &LinearSystem, config: &StoppingConfig) -> Option<StoppingReason> {
    if state.residual.norm() <= config.atol + config.rtol * system.b().norm() {
        return Some(StoppingReason::ResidualTol);
    }
    if let (Some(tol), Some(trace)) = (config.trace_tol, state.cov_trace) {
        if trace <= tol {
            return Some(StoppingReason::PosteriorTraceTol);
        }
    }
    let maxiter = config.maxiter.unwrap_or(10 * system.dim());
    (state.iteration >= maxiter).then_some(StoppingReason::Maxiter)
}

/// The pluggable parts of [`super::problinsolve`].
#[derive(Debug)]
pub struct SolverComponents {
    pub policy: Box<dyn Policy>,
    pub information_op: Box<dyn InformationOp>,
    pub belief_update: Box<dyn BeliefUpdate>,
    pub stopping: Vec<Box<dyn StoppingCriterion>>,
    /// Also infer a matrix-variate belief over `A⁻¹` from the collected pairs.
    pub infer_inverse: bool,
}

impl Default for SolverComponents {
    fn default() -> Self {
        Self::with_stopping(StoppingConfig::default())
    }
}

impl SolverComponents {
    pub fn with_stopping(config: StoppingConfig) -> Self {
        Self {
            policy: Box::new(ConjugatePolicy),
            information_op: Box::new(MatVec),
            belief_update: Box::new(SolutionConditioning),
            stopping: vec![Box::new(config)],
            infer_inverse: true,
        }
    }
}
