use nalgebra::{DMatrix, DVector};

use super::model::{FilterStep, FilterTrajectory, GaussianTransition, Innovation, LinearObservationModel};
use crate::dense::{self, hstack, tria};
use crate::error::{numerical, Result};
use crate::randvars::{check_innovation, Gaussian};

/// Square-root prediction: the new factor is `tria([Φ·L, L_Q])`.
pub fn sqrt_predict(state: &Gaussian, transition: &GaussianTransition) -> Result<Gaussian> {
    transition.check_state(state)?;
    let phi = transition.phi();
    let l = state.cov_factor()?;
    let mean = phi * state.mean() + transition.drift();
    let factor = tria(&hstack(&[&(phi * l), transition.noise_factor()?]));
    Gaussian::from_factor(mean, factor)
}

/// Square-root update.
///
/// The block matrix `[[L_R, H·L], [0, L]]` is lower-triangularized; its
/// diagonal blocks are the innovation factor and the posterior factor and the
/// off-diagonal block is the scaled gain. No covariances are subtracted.
pub fn sqrt_update(
    state: &Gaussian,
    model: &LinearObservationModel,
    y: &DVector<f64>,
) -> Result<(Gaussian, Innovation)> {
    model.check(state, y)?;
    let n = state.dim();
    let m = model.obs_dim();
    let h = model.h();
    let l = state.cov_factor()?;
    let l_r = dense::psd_factor(model.noise_cov())?;

    let mut block = DMatrix::zeros(m + n, m + n);
    block.view_mut((0, 0), (m, m)).copy_from(&l_r);
    block.view_mut((0, m), (m, n)).copy_from(&(h * l));
    block.view_mut((m, m), (n, n)).copy_from(l);
    let t = tria(&block);
    let s_factor = t.view((0, 0), (m, m)).into_owned();
    let scaled_gain = t.view((m, 0), (n, m)).into_owned();
    let post_factor = t.view((m, m), (n, n)).into_owned();

    let s = &s_factor * s_factor.transpose();
    check_innovation(&s)?;
    let residual = y - h * state.mean() - model.offset();
    let whitened = dense::lower_solve(&s_factor, &dense::column(&residual))
        .map_err(|_| numerical("singular innovation factor in square-root update"))?;
    let mean = state.mean() + (&scaled_gain * whitened).column(0);
    let posterior = Gaussian::from_factor(mean, post_factor)?;
    Ok((posterior, Innovation { residual, cov: s }))
}

/// Forward filter using the square-root recursion.
pub fn sqrt_filter(t0: f64, initial: Gaussian, steps: &[FilterStep]) -> Result<FilterTrajectory> {
    // make sure the initial state carries a factor
    initial.cov_factor()?;
    let mut traj = FilterTrajectory::start(t0, initial);
    for step in steps {
        traj.check_time(step.time)?;
        let previous = traj.filtered.last().expect("trajectory is never empty");
        let predicted = sqrt_predict(previous, &step.transition)?;
        let (filtered, innovation) = match &step.observation {
            Some((model, y)) => {
                let (post, inn) = sqrt_update(&predicted, model, y)?;
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

/// Smoothing gain `G` with `P_pred·Gᵀ = Φ·P_f`, from the predicted factor.
pub(crate) fn smoothing_gain(
    filtered: &Gaussian,
    predicted_factor: &DMatrix<f64>,
    phi: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let l_f = filtered.cov_factor()?;
    let rhs = phi * l_f * l_f.transpose();
    let diag_min = predicted_factor.diagonal().iter().fold(f64::INFINITY, |a, &d| a.min(d));
    let diag_max = predicted_factor.diagonal().amax();
    if diag_min > 1e-12 * diag_max {
        let half = dense::lower_solve(predicted_factor, &rhs)?;
        return Ok(dense::lower_transpose_solve(predicted_factor, &half)?.transpose());
    }
    let p_pred = predicted_factor * predicted_factor.transpose();
    Ok(dense::solve_psd(&p_pred, &rhs)?.transpose())
}

/// One backward step of the square-root smoother.
///
/// Given the filtered belief at `t_k`, the smoothed belief at `t_{k+1}` and
/// the transition between them, returns the smoothed belief at `t_k`. The
/// covariance is assembled in the form
/// `(I − GΦ)·P_f·(I − GΦ)ᵀ + G·Q·Gᵀ + G·P_s·Gᵀ`, one factor per term.
pub fn sqrt_smooth_step(
    filtered: &Gaussian,
    smoothed_next: &Gaussian,
    transition: &GaussianTransition,
) -> Result<Gaussian> {
    transition.check_state(filtered)?;
    transition.check_state(smoothed_next)?;
    let phi = transition.phi();
    let l_f = filtered.cov_factor()?;
    let l_q = transition.noise_factor()?;
    let l_s = smoothed_next.cov_factor()?;
    let predicted_mean = phi * filtered.mean() + transition.drift();
    let predicted_factor = tria(&hstack(&[&(phi * l_f), l_q]));
    let gain = smoothing_gain(filtered, &predicted_factor, phi)?;

    let n = filtered.dim();
    let contraction = DMatrix::identity(n, n) - &gain * phi;
    let mean = filtered.mean() + &gain * (smoothed_next.mean() - predicted_mean);
    let factor = tria(&hstack(&[&(&contraction * l_f), &(&gain * l_q), &(&gain * l_s)]));
    Gaussian::from_factor(mean, factor)
}

/// Square-root Rauch–Tung–Striebel smoother.
pub fn sqrt_smooth(traj: &FilterTrajectory) -> Result<Vec<Gaussian>> {
    traj.check_complete()?;
    let n = traj.len();
    let mut smoothed = vec![traj.filtered[n - 1].clone()];
    for k in (0..n - 1).rev() {
        let next = smoothed.last().expect("nonempty");
        let step = sqrt_smooth_step(&traj.filtered[k], next, &traj.transitions[k])?;
        smoothed.push(step);
    }
    smoothed.reverse();
    Ok(smoothed)
}
