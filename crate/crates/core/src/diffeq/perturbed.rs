use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ivp::Ivp;
use super::solve::uniform_grid;
use crate::error::{argument, numerical, Error, Result};

/// Explicit Runge–Kutta base methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RkMethod {
    Euler,
    Rk4,
}

impl RkMethod {
    pub fn order(self) -> usize {
        match self {
            Self::Euler => 1,
            Self::Rk4 => 4,
        }
    }

    pub fn step(self, ivp: &Ivp, y: &DVector<f64>, t: f64, h: f64) -> Result<DVector<f64>> {
        match self {
            Self::Euler => Ok(y + ivp.eval(y, t)? * h),
            Self::Rk4 => {
                let k1 = ivp.eval(y, t)?;
                let k2 = ivp.eval(&(y + &k1 * (h / 2.0)), t + h / 2.0)?;
                let k3 = ivp.eval(&(y + &k2 * (h / 2.0)), t + h / 2.0)?;
                let k4 = ivp.eval(&(y + &k3 * h), t + h)?;
                Ok(y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
            }
        }
    }
}

/// One trajectory on the common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub values: Vec<DVector<f64>>,
    /// `f` at each node and the member's internal time, for interpolation.
    pub slopes: Vec<DVector<f64>>,
}

/// Ensemble from randomized time steps.
#[derive(Debug, Clone)]
pub struct PerturbedSolution {
    pub times: Vec<f64>,
    pub members: Vec<Member>,
    pub method: RkMethod,
    pub scale: f64,
    /// Members dropped because their state became non-finite.
    pub excluded: usize,
}

/// Mean and sample standard deviation; identical members give their common
/// value and exactly zero spread.
fn ensemble_stats(values: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let first = &values[0];
    if values.iter().all(|v| v == first) {
        return (first.clone(), DVector::zeros(first.len()));
    }
    let n = values.len();
    let mean = values.iter().fold(DVector::zeros(first.len()), |acc, v| acc + v) / n as f64;
    let ss = values
        .iter()
        .fold(DVector::zeros(mean.len()), |acc, v| acc + (v - &mean).map(|d| d * d));
    (mean, (ss / (n - 1) as f64).map(f64::sqrt))
}

impl PerturbedSolution {
    /// Ensemble mean at grid node `k`.
    pub fn mean(&self, k: usize) -> DVector<f64> {
        self.stats(k).0
    }

    /// Ensemble standard deviation at grid node `k` (zero for one member).
    pub fn std(&self, k: usize) -> DVector<f64> {
        self.stats(k).1
    }

    fn stats(&self, k: usize) -> (DVector<f64>, DVector<f64>) {
        let values: Vec<DVector<f64>> = self.members.iter().map(|m| m.values[k].clone()).collect();
        ensemble_stats(&values)
    }

    /// Ensemble mean and standard deviation of the interpolated members at `t`.
    pub fn stats_at(&self, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let values = (0..self.members.len())
            .map(|i| self.evaluate(i, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(ensemble_stats(&values))
    }

    /// Value of member `index` at `t`: the node value at grid times, cubic
    /// Hermite interpolation (RK4) or linear interpolation (Euler) between.
    pub fn evaluate(&self, index: usize, t: f64) -> Result<DVector<f64>> {
        let member = self
            .members
            .get(index)
            .ok_or_else(|| argument(format!("no ensemble member {index}")))?;
        let (t0, tmax) = (self.times[0], *self.times.last().unwrap());
        if !(t >= t0 && t <= tmax) {
            return Err(argument(format!("evaluation time {t} outside [{t0}, {tmax}]")));
        }
        let k = self.times.partition_point(|&s| s < t);
        if self.times[k] == t {
            return Ok(member.values[k].clone());
        }
        let (ta, tb) = (self.times[k - 1], self.times[k]);
        let h = tb - ta;
        let s = (t - ta) / h;
        let (ya, yb) = (&member.values[k - 1], &member.values[k]);
        Ok(match self.method {
            RkMethod::Euler => ya * (1.0 - s) + yb * s,
            RkMethod::Rk4 => {
                let (fa, fb) = (&member.slopes[k - 1], &member.slopes[k]);
                let h00 = (1.0 + 2.0 * s) * (1.0 - s).powi(2);
                let h10 = s * (1.0 - s).powi(2);
                let h01 = s * s * (3.0 - 2.0 * s);
                let h11 = s * s * (s - 1.0);
                ya * h00 + fa * (h10 * h) + yb * h01 + fb * (h11 * h)
            }
        })
    }
}

/// Integrates along `grid`, drawing each step from `U[h − δ, h + δ]` with
/// `δ = min(scale·h^(p+½), 0.9h)`. The `n`-th state is reported at the grid
/// time `t_n`; the vector field sees the internal time `t₀ + Σ H_i`.
fn integrate<R: Rng + ?Sized>(ivp: &Ivp, method: RkMethod, grid: &[f64], scale: f64, rng: &mut R) -> Result<Member> {
    let p = method.order() as f64;
    let mut y = ivp.y0().clone();
    // internal time minus grid time
    let mut offset = 0.0;
    let mut values = vec![y.clone()];
    let mut slopes = vec![ivp.eval(&y, grid[0])?];
    for w in grid.windows(2) {
        let nominal = w[1] - w[0];
        let delta = (scale * nominal.powf(p + 0.5)).min(0.9 * nominal);
        let step = if delta > 0.0 {
            rng.random_range(nominal - delta..=nominal + delta)
        } else {
            nominal
        };
        y = method.step(ivp, &y, w[0] + offset, step)?;
        offset += step - nominal;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(numerical(format!("non-finite state at t = {}", w[1])));
        }
        slopes.push(ivp.eval(&y, w[1] + offset)?);
        values.push(y.clone());
    }
    Ok(Member { values, slopes })
}

fn check_step(h: f64, span: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(argument(format!("step size must be positive, got {h}")));
    }
    if span / h > 1e8 {
        return Err(argument(format!("step size {h} would need more than 1e8 steps")));
    }
    Ok(())
}

/// Deterministic base method on the uniform grid with spacing `h`.
pub fn rk_solve(ivp: &Ivp, method: RkMethod, h: f64) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    check_step(h, ivp.tmax() - ivp.t0())?;
    let grid = uniform_grid(ivp.t0(), ivp.tmax(), h);
    let mut y = ivp.y0().clone();
    let mut values = vec![y.clone()];
    for w in grid.windows(2) {
        y = method.step(ivp, &y, w[0], w[1] - w[0])?;
        values.push(y.clone());
    }
    Ok((grid, values))
}

/// Randomized-time-step ensemble around `method`.
///
/// Member `i` draws from the ChaCha8 stream `i` of `seed`, so the ensemble
/// does not depend on evaluation order. With `scale = 0` every member equals
/// [`rk_solve`] bit for bit.
pub fn perturbed_solve(
    ivp: &Ivp,
    method: RkMethod,
    h: f64,
    scale: f64,
    ensemble_size: usize,
    seed: u64,
) -> Result<PerturbedSolution> {
    check_step(h, ivp.tmax() - ivp.t0())?;
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(argument(format!("perturbation scale must be nonnegative, got {scale}")));
    }
    if ensemble_size == 0 {
        return Err(argument("ensemble size must be at least 1"));
    }
    let grid = uniform_grid(ivp.t0(), ivp.tmax(), h);
    let mut members = Vec::with_capacity(ensemble_size);
    let mut excluded = 0;
    for index in 0..ensemble_size {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        match integrate(ivp, method, &grid, scale, &mut rng) {
            Ok(member) => members.push(member),
            Err(Error::Numerical(_)) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if members.is_empty() {
        return Err(numerical("every ensemble member diverged"));
    }
    Ok(PerturbedSolution {
        times: grid,
        members,
        method,
        scale,
        excluded,
    })
}
