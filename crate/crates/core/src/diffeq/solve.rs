use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::init::taylor_init;
use super::ivp::Ivp;
use super::odefilter::{adapt_step, calibrate_diffusion, odefilter_step, to_scaled, EkMode, StepResidual};
use super::prior::{precondition, IwpPrior};
use crate::error::{argument, numerical, Error, Result};
use crate::filtsmooth::{sqrt_predict, sqrt_smooth_step, BackwardConditional};
use crate::randvars::Gaussian;

/// How the time grid is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum StepControl {
    /// Error-controlled steps. Without an initial step a heuristic based on
    /// `y₀` and `f(y₀, t₀)` is used.
    Adaptive { initial_step: Option<f64> },
    /// Exactly these times; must start at `t₀` and end at `t_max`.
    FixedGrid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolverOptions {
    pub q: usize,
    pub mode: EkMode,
    pub atol: f64,
    pub rtol: f64,
    pub steps: StepControl,
    /// Cap on attempted steps, accepted or not.
    pub max_steps: usize,
}

impl Default for OdeSolverOptions {
    fn default() -> Self {
        Self {
            q: 2,
            mode: EkMode::Ek1,
            atol: 1e-6,
            rtol: 1e-3,
            steps: StepControl::Adaptive { initial_step: None },
            max_steps: 100_000,
        }
    }
}

impl OdeSolverOptions {
    /// Uniform grid with spacing `h`; the last step is shortened to land on
    /// `t_max`.
    pub fn fixed_step(ivp: &Ivp, h: f64) -> Result<StepControl> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(argument(format!("step size must be positive, got {h}")));
        }
        Ok(StepControl::FixedGrid(uniform_grid(ivp.t0(), ivp.tmax(), h)))
    }
}

/// `t₀, t₀+h, …` accumulated by repeated addition, with the final node at
/// `t_max` (a remainder below `1e-12·span` is merged into the last step).
pub(crate) fn uniform_grid(t0: f64, tmax: f64, h: f64) -> Vec<f64> {
    let span = tmax - t0;
    let mut grid = vec![t0];
    let mut t = t0;
    loop {
        let next = t + h;
        if next >= tmax - 1e-12 * span {
            grid.push(tmax);
            return grid;
        }
        grid.push(next);
        t = next;
    }
}

/// One attempted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub h: f64,
    pub accepted: bool,
    pub error_norm: f64,
}

/// Posterior of an ODE filter solve.
#[derive(Debug, Clone)]
pub struct OdePosterior {
    prior: IwpPrior,
    times: Vec<f64>,
    states: Vec<Gaussian>,
    filtered_unit: Vec<Gaussian>,
    smoothed_unit: Vec<Gaussian>,
    diffusion: f64,
    step_log: Vec<StepRecord>,
    warnings: Vec<String>,
}

impl OdePosterior {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Calibrated smoothing posterior over the full stack at each grid time.
    pub fn states(&self) -> &[Gaussian] {
        &self.states
    }

    /// Calibrated filtering beliefs at the grid times.
    pub fn filtered(&self) -> Result<Vec<Gaussian>> {
        self.filtered_unit.iter().map(|g| g.scale_cov(self.diffusion)).collect()
    }

    /// Globally calibrated diffusion `σ̂²`.
    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn prior(&self) -> &IwpPrior {
        &self.prior
    }

    pub fn step_log(&self) -> &[StepRecord] {
        &self.step_log
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Projection of a full-stack belief onto the solution `y`.
    pub fn solution(&self, state: &Gaussian) -> Result<Gaussian> {
        state.marginal(&self.prior.indices(0))
    }

    /// Solution marginals at the grid times.
    pub fn solution_marginals(&self) -> Result<Vec<Gaussian>> {
        self.states.iter().map(|s| self.solution(s)).collect()
    }

    /// Smoothing posterior over the full stack at an arbitrary `t`.
    ///
    /// Grid times return the stored belief itself. Between nodes, the filter
    /// belief is predicted to `t` and then smoothed against the next node.
    pub fn evaluate(&self, t: f64) -> Result<Gaussian> {
        let t0 = self.times[0];
        let tmax = *self.times.last().expect("grid is nonempty");
        if !(t >= t0 && t <= tmax) {
            return Err(argument(format!("evaluation time {t} outside [{t0}, {tmax}]")));
        }
        let k = self.times.partition_point(|&s| s < t);
        if self.times[k] == t {
            return Ok(self.states[k].clone());
        }
        let (left, right) = (self.times[k - 1], self.times[k]);
        let pc = precondition(&self.prior, t - left)?;
        let inside_bar = sqrt_predict(
            &to_scaled(&self.filtered_unit[k - 1], &pc.inverse_scaling())?,
            &pc.transition,
        )?;
        let inside = to_scaled(&inside_bar, &pc.scaling)?;
        let smoothed = smooth_interval(&self.prior, &inside, &self.smoothed_unit[k], right - t)?;
        smoothed.scale_cov(self.diffusion)
    }

    /// Solution marginal at an arbitrary `t`.
    pub fn evaluate_solution(&self, t: f64) -> Result<Gaussian> {
        self.solution(&self.evaluate(t)?)
    }

    /// Joint draws of the solution at the grid times, one `times × d` matrix
    /// per draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<DMatrix<f64>>> {
        if count == 0 {
            return Err(argument("sample count must be positive"));
        }
        let n = self.times.len();
        let dim = self.prior.state_dim();
        let scale = self.diffusion.sqrt();
        let last = self.states[n - 1].sample(rng, count)?;
        let mut full: Vec<DMatrix<f64>> = (0..count)
            .map(|s| {
                let mut m = DMatrix::zeros(n, dim);
                m.set_row(n - 1, &last.row(s));
                m
            })
            .collect();
        for k in (0..n - 1).rev() {
            let pc = precondition(&self.prior, self.times[k + 1] - self.times[k])?;
            let inv = pc.inverse_scaling();
            let filtered_bar = to_scaled(&self.filtered_unit[k], &inv)?;
            let cond = BackwardConditional::new(&filtered_bar, &pc.transition)?;
            for draw in full.iter_mut() {
                let next = draw.row(k + 1).transpose().component_mul(&inv);
                let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal)) * scale;
                let x = cond.draw(&next, &z).component_mul(&pc.scaling);
                draw.set_row(k, &x.transpose());
            }
        }
        let columns = self.prior.indices(0);
        Ok(full.into_iter().map(|m| m.select_columns(&columns)).collect())
    }
}

/// One backward smoothing step over an interval of length `h`, in
/// preconditioned coordinates.
fn smooth_interval(prior: &IwpPrior, filtered: &Gaussian, smoothed_next: &Gaussian, h: f64) -> Result<Gaussian> {
    let pc = precondition(prior, h)?;
    let inv = pc.inverse_scaling();
    let out = sqrt_smooth_step(
        &to_scaled(filtered, &inv)?,
        &to_scaled(smoothed_next, &inv)?,
        &pc.transition,
    )?;
    to_scaled(&out, &pc.scaling)
}

fn initial_step_heuristic(ivp: &Ivp, atol: f64, rtol: f64) -> Result<f64> {
    let y0 = ivp.y0();
    let f0 = ivp.eval(y0, ivp.t0())?;
    let rms = |v: &DVector<f64>| {
        (v.iter()
            .zip(y0.iter())
            .map(|(x, y)| (x / (atol + rtol * y.abs())).powi(2))
            .sum::<f64>()
            / v.len() as f64)
            .sqrt()
    };
    let (d0, d1) = (rms(y0), rms(&f0));
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    Ok(h.min(ivp.tmax() - ivp.t0()))
}

fn check_options(ivp: &Ivp, options: &OdeSolverOptions) -> Result<()> {
    if !(options.atol >= 0.0 && options.rtol >= 0.0) || options.atol + options.rtol <= 0.0 {
        return Err(argument("tolerances must be nonnegative and not both zero"));
    }
    if let StepControl::FixedGrid(grid) = &options.steps {
        if grid.len() < 2 || grid[0] != ivp.t0() || *grid.last().unwrap() != ivp.tmax() {
            return Err(argument("fixed grid must start at t0 and end at tmax"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(argument("fixed grid must be strictly increasing"));
        }
    }
    if let StepControl::Adaptive { initial_step: Some(h) } = options.steps {
        if !(h > 0.0 && h.is_finite()) {
            return Err(argument(format!("initial step must be positive, got {h}")));
        }
    }
    Ok(())
}

/// Probabilistic ODE solve by extended Kalman filtering and smoothing with
/// an integrated Wiener process prior.
///
/// Filtering runs in preconditioned square-root form under unit diffusion.
/// Afterwards the diffusion is calibrated globally and the smoothing
/// posterior is computed and rescaled by `σ̂²`.
pub fn solve_ivp(ivp: &Ivp, options: &OdeSolverOptions) -> Result<OdePosterior> {
    check_options(ivp, options)?;
    let prior = IwpPrior::new(options.q, ivp.dim())?;
    let (initial, warnings) = taylor_init(ivp, &prior)?;
    let (t0, tmax) = (ivp.t0(), ivp.tmax());
    let span = tmax - t0;

    let mut times = vec![t0];
    let mut filtered = vec![initial];
    let mut residuals: Vec<StepResidual> = Vec::new();
    let mut step_log = Vec::new();

    match &options.steps {
        StepControl::FixedGrid(grid) => {
            for w in grid.windows(2) {
                let step = odefilter_step(filtered.last().unwrap(), w[0], w[1] - w[0], ivp, options.mode, &prior)?;
                step_log.push(StepRecord {
                    t: w[0],
                    h: w[1] - w[0],
                    accepted: true,
                    error_norm: f64::NAN,
                });
                times.push(w[1]);
                filtered.push(step.state);
                residuals.push(step.residual);
            }
        }
        StepControl::Adaptive { initial_step } => {
            let mut h = match initial_step {
                Some(h) => h.min(span),
                None => initial_step_heuristic(ivp, options.atol, options.rtol)?,
            };
            let mut t = t0;
            let mut last_failure: Option<Error> = None;
            while t < tmax {
                if step_log.len() >= options.max_steps {
                    return Err(numerical(format!(
                        "step limit {} reached at t = {t}",
                        options.max_steps
                    )));
                }
                if h < 1e-14 * span {
                    return Err(match last_failure {
                        Some(Error::Numerical(msg)) => {
                            numerical(format!("step size underflow at t = {t} after repeated failures: {msg}"))
                        }
                        _ => Error::StepSizeUnderflow { t, h },
                    });
                }
                let lands = t + h >= tmax - 1e-12 * span;
                let (h_try, t_next) = if lands { (tmax - t, tmax) } else { (h, t + h) };
                let current = filtered.last().unwrap();
                let step = match odefilter_step(current, t, h_try, ivp, options.mode, &prior) {
                    Ok(step) => step,
                    Err(e @ Error::Numerical(_)) => {
                        step_log.push(StepRecord {
                            t,
                            h: h_try,
                            accepted: false,
                            error_norm: f64::INFINITY,
                        });
                        last_failure = Some(e);
                        h = h_try * 0.2;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let y_old = current.mean().select_rows(&prior.indices(0));
                let y_new = step.state.mean().select_rows(&prior.indices(0));
                let reference = y_old.abs().sup(&y_new.abs());
                let decision = adapt_step(
                    &step.local_error,
                    options.atol,
                    options.rtol,
                    &reference,
                    h_try,
                    options.q,
                    f64::INFINITY,
                );
                step_log.push(StepRecord {
                    t,
                    h: h_try,
                    accepted: decision.accept,
                    error_norm: decision.error_norm,
                });
                if decision.accept {
                    last_failure = None;
                    t = t_next;
                    times.push(t_next);
                    filtered.push(step.state);
                    residuals.push(step.residual);
                }
                let remaining = tmax - t;
                h = if remaining > 0.0 {
                    decision.h_next.min(remaining)
                } else {
                    decision.h_next
                };
            }
        }
    }

    let diffusion = calibrate_diffusion(&residuals)?;
    let n = times.len();
    let mut smoothed_unit = vec![filtered[n - 1].clone()];
    for k in (0..n - 1).rev() {
        let next = smoothed_unit.last().unwrap();
        smoothed_unit.push(smooth_interval(&prior, &filtered[k], next, times[k + 1] - times[k])?);
    }
    smoothed_unit.reverse();
    let states = smoothed_unit
        .iter()
        .map(|g| g.scale_cov(diffusion))
        .collect::<Result<Vec<_>>>()?;
    Ok(OdePosterior {
        prior,
        times,
        states,
        filtered_unit: filtered,
        smoothed_unit,
        diffusion,
        step_log,
        warnings,
    })
}
