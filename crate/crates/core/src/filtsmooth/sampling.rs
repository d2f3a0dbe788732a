use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::model::{FilterTrajectory, GaussianTransition};
use super::sqrt::smoothing_gain;
use crate::dense::{hstack, tria};
use crate::error::{argument, Result};
use crate::randvars::Gaussian;

/// Joint draws from the smoothing posterior by backward sampling.
///
/// The last state is drawn from the final filtered belief; each earlier state
/// is drawn from `x_k | x_{k+1}`, the Gaussian with mean
/// `m_f + G·(x_{k+1} − m_pred)` and covariance
/// `(I − GΦ)·P_f·(I − GΦ)ᵀ + G·Q·Gᵀ`.
///
/// Returns one `times × dim` matrix per draw.
pub fn sample_posterior<R: Rng + ?Sized>(
    traj: &FilterTrajectory,
    rng: &mut R,
    count: usize,
) -> Result<Vec<DMatrix<f64>>> {
    traj.check_complete()?;
    if count == 0 {
        return Err(argument("sample count must be positive"));
    }
    let n_times = traj.len();
    let dim = traj.filtered[0].dim();
    let mut draws = vec![DMatrix::zeros(n_times, dim); count];

    let last = &traj.filtered[n_times - 1];
    let last_samples = last.sample(rng, count)?;
    for (s, draw) in draws.iter_mut().enumerate() {
        draw.set_row(n_times - 1, &last_samples.row(s));
    }

    for k in (0..n_times - 1).rev() {
        let cond = BackwardConditional::new(&traj.filtered[k], &traj.transitions[k])?;
        for draw in draws.iter_mut() {
            let next = draw.row(k + 1).transpose();
            let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            draw.set_row(k, &cond.draw(&next, &z).transpose());
        }
    }
    Ok(draws)
}

/// The Gaussian `x_k | x_{k+1}` of a linear-Gaussian chain.
pub(crate) struct BackwardConditional {
    gain: DMatrix<f64>,
    factor: DMatrix<f64>,
    filtered_mean: DVector<f64>,
    predicted_mean: DVector<f64>,
}

impl BackwardConditional {
    pub(crate) fn new(filtered: &Gaussian, transition: &GaussianTransition) -> Result<Self> {
        let dim = filtered.dim();
        let phi = transition.phi();
        let l_f = filtered.cov_factor()?;
        let l_q = transition.noise_factor()?;
        let predicted_factor = tria(&hstack(&[&(phi * l_f), l_q]));
        let predicted_mean = phi * filtered.mean() + transition.drift();
        let gain = smoothing_gain(filtered, &predicted_factor, phi)?;
        let contraction = DMatrix::identity(dim, dim) - &gain * phi;
        let factor = tria(&hstack(&[&(&contraction * l_f), &(&gain * l_q)]));
        Ok(Self {
            gain,
            factor,
            filtered_mean: filtered.mean().clone(),
            predicted_mean,
        })
    }

    /// A draw given the next state and a standard-normal vector `z`.
    pub(crate) fn draw(&self, next: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        &self.filtered_mean + &self.gain * (next - &self.predicted_mean) + &self.factor * z
    }
}
