use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ivp::Ivp;
use super::prior::{precondition, IwpPrior};
use crate::error::{argument, numerical, Result};
use crate::filtsmooth::{sqrt_predict, sqrt_update, LinearObservationModel};
use crate::randvars::Gaussian;

/// Linearization of the ODE residual `m(x) = E₁x − f(E₀x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EkMode {
    /// `H = E₁`.
    Ek0,
    /// `H = E₁ − J_f·E₀`.
    #[default]
    Ek1,
}

/// Affine, noise-free observation model of the ODE residual around the
/// predicted mean, exact at that mean: `H·m + c = m(m)`.
pub fn ek_linearize(
    ivp: &Ivp,
    state_pred: &Gaussian,
    t: f64,
    mode: EkMode,
    prior: &IwpPrior,
) -> Result<LinearObservationModel> {
    if state_pred.dim() != prior.state_dim() || prior.dim() != ivp.dim() {
        return Err(argument(format!(
            "state of dimension {} does not fit the prior (state dimension {}, ODE dimension {})",
            state_pred.dim(),
            prior.state_dim(),
            ivp.dim()
        )));
    }
    let e0 = prior.projection(0);
    let e1 = prior.projection(1);
    let mean = state_pred.mean();
    let y = &e0 * mean;
    let residual = &e1 * mean - ivp.eval(&y, t)?;
    let h = match mode {
        EkMode::Ek0 => e1,
        EkMode::Ek1 => e1 - ivp.jacobian(&y, t)? * e0,
    };
    let offset = residual - &h * mean;
    LinearObservationModel::exact(h).with_offset(offset)
}

/// Residual `z` and innovation covariance under unit diffusion for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResidual {
    pub z: DVector<f64>,
    pub s_unit: DMatrix<f64>,
}

/// Quasi-maximum-likelihood diffusion `σ̂² = (1/(N·d))·Σ zᵀ·S⁻¹·z`.
pub fn calibrate_diffusion(residuals: &[StepResidual]) -> Result<f64> {
    let first = residuals
        .first()
        .ok_or_else(|| argument("diffusion calibration needs at least one step"))?;
    let d = first.z.len();
    let mut total = 0.0;
    for (k, r) in residuals.iter().enumerate() {
        if r.z.len() != d || r.s_unit.shape() != (d, d) {
            return Err(argument(format!("residual {k} has inconsistent dimensions")));
        }
        total += whitened_norm_squared(r)
            .map_err(|_| numerical(format!("singular unit innovation covariance at step {k}")))?;
    }
    Ok(total / (residuals.len() * d) as f64)
}

fn whitened_norm_squared(r: &StepResidual) -> Result<f64> {
    if r.z.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let chol = r
        .s_unit
        .clone()
        .cholesky()
        .ok_or_else(|| numerical("singular unit innovation covariance"))?;
    Ok(r.z.dot(&chol.solve(&r.z)))
}

/// Outcome of [`odefilter_step`].
#[derive(Debug, Clone)]
pub struct OdeStep {
    /// Filtered belief at `t + h` under unit diffusion.
    pub state: Gaussian,
    /// `√σ̂²_local·√diag(S)`, per ODE dimension.
    pub local_error: DVector<f64>,
    pub residual: StepResidual,
}

pub(crate) fn to_scaled(g: &Gaussian, scale: &DVector<f64>) -> Result<Gaussian> {
    let factor = DMatrix::from_diagonal(scale) * g.cov_factor()?;
    Gaussian::from_factor(g.mean().component_mul(scale), factor)
}

/// One filter step of size `h` from `state` at time `t`.
///
/// Square-root predict with unit diffusion in preconditioned coordinates,
/// linearize at the predicted mean, square-root update on the residual.
pub fn odefilter_step(state: &Gaussian, t: f64, h: f64, ivp: &Ivp, mode: EkMode, prior: &IwpPrior) -> Result<OdeStep> {
    let unit = IwpPrior::new(prior.q(), prior.dim())?;
    if state.dim() != unit.state_dim() {
        return Err(argument(format!(
            "state of dimension {} for prior state dimension {}",
            state.dim(),
            unit.state_dim()
        )));
    }
    let pc = precondition(&unit, h)?;
    let t_next = t + h;
    let predicted_bar = sqrt_predict(&to_scaled(state, &pc.inverse_scaling())?, &pc.transition)?;
    let predicted = to_scaled(&predicted_bar, &pc.scaling)?;
    let model = ek_linearize(ivp, &predicted, t_next, mode, &unit)?;
    let h_bar = model.h() * DMatrix::from_diagonal(&pc.scaling);
    let model_bar = LinearObservationModel::exact(h_bar).with_offset(model.offset().clone())?;
    let (filtered_bar, innovation) = sqrt_update(&predicted_bar, &model_bar, &DVector::zeros(unit.dim()))?;
    let filtered = to_scaled(&filtered_bar, &pc.scaling)?;
    if filtered.mean().iter().any(|v| !v.is_finite()) {
        return Err(numerical(format!("non-finite filter state at t = {t_next}")));
    }

    let residual = StepResidual {
        z: innovation.residual,
        s_unit: innovation.cov,
    };
    let local_diffusion = whitened_norm_squared(&residual)? / unit.dim() as f64;
    let local_error = residual
        .s_unit
        .diagonal()
        .map(|s| (local_diffusion * s.max(0.0)).sqrt());
    Ok(OdeStep {
        state: filtered,
        local_error,
        residual,
    })
}

/// Accept/reject decision and the next step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecision {
    pub accept: bool,
    pub h_next: f64,
    /// RMS of the scaled local error.
    pub error_norm: f64,
}

/// Step-size controller.
///
/// `E = RMS(local_error / (atol + rtol·|reference|))`; the step is accepted
/// iff `E ≤ 1` and `h_next = h·clamp(0.95·E^(−1/(q+1)), 0.2, 10)`, cut so as
/// not to pass the remaining distance to `t_max`.
pub fn adapt_step(
    local_error: &DVector<f64>,
    atol: f64,
    rtol: f64,
    reference: &DVector<f64>,
    h: f64,
    q: usize,
    remaining: f64,
) -> StepDecision {
    let d = local_error.len().max(1) as f64;
    let error_norm = (local_error
        .iter()
        .zip(reference.iter())
        .map(|(e, r)| (e / (atol + rtol * r.abs())).powi(2))
        .sum::<f64>()
        / d)
        .sqrt();
    let factor = if error_norm == 0.0 {
        10.0
    } else {
        (0.95 * error_norm.powf(-1.0 / (q as f64 + 1.0))).clamp(0.2, 10.0)
    };
    let factor = if factor.is_nan() { 0.2 } else { factor };
    let mut h_next = h * factor;
    if remaining > 0.0 {
        h_next = h_next.min(remaining);
    }
    StepDecision {
        accept: error_norm <= 1.0,
        h_next,
        error_norm,
    }
}
