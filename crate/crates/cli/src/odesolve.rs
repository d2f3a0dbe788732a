use std::io::Read;
use std::time::Instant;

use nalgebra::DVector;
use pnkit::diffeq::{perturbed_solve, solve_ivp, EkMode, Ivp, OdeSolverOptions, RkMethod, StepControl, StepRecord};
use pnkit::problems::{Problem, ProblemSpec};
use pnkit::randvars::Gaussian;
use serde::Serialize;

use crate::args::{BaseMethod, OdeMethod, OdesolveArgs};
use crate::input::load_problem;
use crate::report::RunReport;
use crate::{CliError, Done, EXIT_OK};

/// Posterior at one requested time.
#[derive(Debug, Clone, Serialize)]
pub struct EvalPoint {
    pub t: f64,
    pub belief: Gaussian,
    pub std: Vec<f64>,
    pub reference: Option<Vec<f64>>,
    /// Max-norm distance of the mean to `reference`.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterDiagnostics {
    pub q: usize,
    pub diffusion: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub warnings: Vec<String>,
    pub step_log: Vec<StepRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbedDiagnostics {
    pub base: RkMethod,
    pub step: f64,
    pub scale: f64,
    pub ensemble_size: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeResult {
    pub method: String,
    pub evaluations: Vec<EvalPoint>,
    /// Largest error over the evaluations that have a reference.
    pub max_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbed: Option<PerturbedDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub q: usize,
    pub method: OdeMethod,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub grid: Option<f64>,
    pub seed: u64,
    pub eval: Option<Vec<f64>>,
    pub base: BaseMethod,
    pub scale: f64,
    pub ensemble_size: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            q: 2,
            method: OdeMethod::Ek1,
            rtol: None,
            atol: None,
            grid: None,
            seed: 0,
            eval: None,
            base: BaseMethod::Rk4,
            scale: 1.0,
            ensemble_size: 20,
        }
    }
}

impl From<&OdesolveArgs> for OdeOptions {
    fn from(a: &OdesolveArgs) -> Self {
        Self {
            q: a.q,
            method: a.method,
            rtol: a.rtol,
            atol: a.atol,
            grid: a.grid,
            seed: a.seed,
            eval: a.eval.clone(),
            base: a.base,
            scale: a.scale,
            ensemble_size: a.ensemble_size,
        }
    }
}

/// Reference value at `t`: the closed form if there is one, else a stored
/// reference row at exactly that time.
fn reference_at(spec: &ProblemSpec, t: f64) -> Option<DVector<f64>> {
    if let Some(y) = spec.ivp_params().ok().and_then(|p| p.exact(t)) {
        return Some(y);
    }
    let r = spec.reference_solution.as_ref()?;
    let k = r.times.as_ref()?.iter().position(|s| *s == t)?;
    r.values.get(k).map(|v| DVector::from_column_slice(v))
}

fn eval_times(spec: &ProblemSpec, ivp: &Ivp, requested: &Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
    let times = match requested {
        Some(t) => t.clone(),
        None => spec
            .reference_solution
            .as_ref()
            .and_then(|r| r.times.clone())
            .unwrap_or_else(|| vec![ivp.tmax()]),
    };
    if times.is_empty() {
        return Err(CliError::Usage("--eval needs at least one time".into()));
    }
    if let Some(t) = times.iter().find(|t| !(**t >= ivp.t0() && **t <= ivp.tmax())) {
        return Err(CliError::Failure(format!(
            "evaluation time {t} outside [{}, {}]",
            ivp.t0(),
            ivp.tmax()
        )));
    }
    Ok(times)
}

fn point(spec: &ProblemSpec, t: f64, belief: Gaussian) -> EvalPoint {
    let reference = reference_at(spec, t);
    let error = reference.as_ref().map(|r| (belief.mean() - r).amax());
    EvalPoint {
        t,
        std: belief.std().iter().copied().collect(),
        reference: reference.map(|r| r.iter().copied().collect()),
        error,
        belief,
    }
}

pub fn solve(spec: &ProblemSpec, options: &OdeOptions) -> Result<OdeResult, CliError> {
    let ivp = match spec.resolve()? {
        Problem::Ivp(ivp) => ivp,
        _ => {
            return Err(CliError::Failure(format!(
                "problem of kind {:?} is not an initial value problem",
                spec.kind
            )))
        }
    };
    let times = eval_times(spec, &ivp, &options.eval)?;
    let (method, evaluations, filter, perturbed) = match options.method {
        OdeMethod::Ek0 | OdeMethod::Ek1 => {
            let defaults = OdeSolverOptions::default();
            let steps = match options.grid {
                Some(h) => OdeSolverOptions::fixed_step(&ivp, h)?,
                None => StepControl::Adaptive { initial_step: None },
            };
            let mode = if options.method == OdeMethod::Ek0 {
                EkMode::Ek0
            } else {
                EkMode::Ek1
            };
            let solver = OdeSolverOptions {
                q: options.q,
                mode,
                atol: options.atol.unwrap_or(defaults.atol),
                rtol: options.rtol.unwrap_or(defaults.rtol),
                steps,
                max_steps: defaults.max_steps,
            };
            let posterior = solve_ivp(&ivp, &solver)?;
            let evaluations = times
                .iter()
                .map(|&t| Ok(point(spec, t, posterior.evaluate_solution(t)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let accepted = posterior.step_log().iter().filter(|s| s.accepted).count();
            let diagnostics = FilterDiagnostics {
                q: options.q,
                diffusion: posterior.diffusion(),
                accepted_steps: accepted,
                rejected_steps: posterior.step_log().len() - accepted,
                warnings: posterior.warnings().to_vec(),
                step_log: posterior.step_log().to_vec(),
            };
            let name = if mode == EkMode::Ek0 { "ek0" } else { "ek1" };
            (name, evaluations, Some(diagnostics), None)
        }
        OdeMethod::Perturbed => {
            let base = match options.base {
                BaseMethod::Euler => RkMethod::Euler,
                BaseMethod::Rk4 => RkMethod::Rk4,
            };
            let h = options.grid.unwrap_or((ivp.tmax() - ivp.t0()) / 100.0);
            let solution = perturbed_solve(&ivp, base, h, options.scale, options.ensemble_size, options.seed)?;
            let evaluations = times
                .iter()
                .map(|&t| {
                    let (mean, std) = solution.stats_at(t)?;
                    let cov = nalgebra::DMatrix::from_diagonal(&std.map(|s| s * s));
                    Ok(point(spec, t, Gaussian::new(mean, cov)?))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let diagnostics = PerturbedDiagnostics {
                base,
                step: h,
                scale: options.scale,
                ensemble_size: options.ensemble_size,
                excluded: solution.excluded,
            };
            ("perturbed", evaluations, None, Some(diagnostics))
        }
    };
    let max_error = evaluations.iter().filter_map(|p| p.error).reduce(f64::max);
    Ok(OdeResult {
        method: method.into(),
        evaluations,
        max_error,
        filter,
        perturbed,
    })
}

pub fn run(args: &OdesolveArgs, echo: &[String], stdin: &mut dyn Read) -> Result<Done, CliError> {
    let start = Instant::now();
    let spec = load_problem(&args.problem.problem, stdin)?;
    let result = solve(&spec, &OdeOptions::from(args))?;
    let report = RunReport::new(echo, args.seed, "ok", result, start.elapsed().as_secs_f64());
    Ok(Done {
        code: EXIT_OK,
        report: report.to_json(),
        out: args.out.clone(),
        stdout: String::new(),
        stderr: String::new(),
    })
}
