use nalgebra::DVector;

use super::model::{FilterStep, FilterTrajectory, GaussianTransition, Innovation, LinearObservationModel};
use crate::dense::{self, max_diag};
use crate::error::Result;
use crate::randvars::Gaussian;

/// `N(Φ·m + b, Φ·P·Φᵀ + Q)`
pub fn predict(state: &Gaussian, transition: &GaussianTransition) -> Result<Gaussian> {
    transition.check_state(state)?;
    let phi = transition.phi();
    let mean = phi * state.mean() + transition.drift();
    let cov = phi * state.cov() * phi.transpose() + transition.noise_cov();
    let scale = max_diag(&cov).max(max_diag(state.cov()));
    Gaussian::derived(mean, cov, scale)
}

/// Conditions `state` on `y = H·x + c + v` and returns the posterior together
/// with the innovation `(z, S)`.
pub fn update(state: &Gaussian, model: &LinearObservationModel, y: &DVector<f64>) -> Result<(Gaussian, Innovation)> {
    model.check(state, y)?;
    let h = model.h();
    let shifted = y - model.offset();
    let residual = &shifted - h * state.mean();
    let s = dense::symmetrize(&(h * state.cov() * h.transpose() + model.noise_cov()));
    let posterior = state.condition_on_linear_observation(h, model.noise_cov(), &shifted)?;
    Ok((posterior, Innovation { residual, cov: s }))
}

/// Forward Kalman recursion. Steps without an observation are predict-only.
pub fn filter(t0: f64, initial: Gaussian, steps: &[FilterStep]) -> Result<FilterTrajectory> {
    let mut traj = FilterTrajectory::start(t0, initial);
    for step in steps {
        traj.check_time(step.time)?;
        let previous = traj.filtered.last().expect("trajectory is never empty");
        let predicted = predict(previous, &step.transition)?;
        let (filtered, innovation) = match &step.observation {
            Some((model, y)) => {
                let (post, inn) = update(&predicted, model, y)?;
                (post, Some(inn))
            }
            None => (predicted.clone(), None),
        };
        traj.times.push(step.time);
        traj.filtered.push(filtered);
        traj.predicted.push(Some(predicted));
        traj.transitions.push(step.transition.clone());
        traj.innovations.push(innovation);
    }
    Ok(traj)
}

/// Rauch–Tung–Striebel smoother.
///
/// The gain `G = P_f·Φᵀ·P_pred⁻¹` comes from a Cholesky solve against the
/// predicted covariance, escalating jitter (and finally a pseudo-inverse)
/// when that covariance is singular.
pub fn rts_smooth(traj: &FilterTrajectory) -> Result<Vec<Gaussian>> {
    traj.check_complete()?;
    let n = traj.len();
    let mut smoothed = vec![traj.filtered[n - 1].clone()];
    for k in (0..n - 1).rev() {
        let filtered = &traj.filtered[k];
        let predicted = traj.predicted[k + 1].as_ref().expect("checked complete");
        let next = smoothed.last().expect("nonempty");
        let phi = traj.transitions[k].phi();
        // P_pred·Gᵀ = Φ·P_f
        let gain = dense::solve_psd(predicted.cov(), &(phi * filtered.cov()))?.transpose();
        let mean = filtered.mean() + &gain * (next.mean() - predicted.mean());
        let cov = filtered.cov() + &gain * (next.cov() - predicted.cov()) * gain.transpose();
        let scale = max_diag(filtered.cov()).max(max_diag(predicted.cov()));
        smoothed.push(Gaussian::derived(mean, cov, scale)?);
    }
    smoothed.reverse();
    Ok(smoothed)
}
