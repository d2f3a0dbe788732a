use std::io::Read;
use std::time::Instant;

use pnkit::linalg::{problinsolve, SolverComponents, StoppingConfig, StoppingReason};
use pnkit::problems::{Problem, ProblemSpec};
use pnkit::randvars::Gaussian;
use serde::Serialize;

use crate::args::LinsolveArgs;
use crate::input::load_problem;
use crate::report::RunReport;
use crate::{CliError, Done, EXIT_NOT_CONVERGED, EXIT_OK};

#[derive(Debug, Clone, Serialize)]
pub struct LinsolveResult {
    pub dim: usize,
    pub belief: Gaussian,
    pub std: Vec<f64>,
    pub iterations: usize,
    pub stopping_reason: StoppingReason,
    pub residual_norm: f64,
    /// Max-norm distance of the posterior mean to the reference solution.
    pub reference_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinsolveOptions {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub maxiter: Option<usize>,
}

pub fn solve(spec: &ProblemSpec, options: LinsolveOptions) -> Result<LinsolveResult, CliError> {
    let resolved = match spec.resolve()? {
        Problem::LinearSystem(r) => r,
        _ => {
            return Err(CliError::Failure(format!(
                "problem of kind {:?} is not a linear system",
                spec.kind
            )))
        }
    };
    let defaults = StoppingConfig::default();
    let config = StoppingConfig {
        atol: options.atol.unwrap_or(defaults.atol),
        rtol: options.rtol.unwrap_or(defaults.rtol),
        trace_tol: None,
        maxiter: options.maxiter,
    };
    let belief = problinsolve(&resolved.system, None, Some(SolverComponents::with_stopping(config)))?;
    let mean = belief.x.mean();
    let reference_error = spec
        .reference_solution
        .as_ref()
        .and_then(|r| r.values.first())
        .filter(|v| v.len() == mean.len())
        .map(|v| {
            v.iter()
                .zip(mean.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        });
    Ok(LinsolveResult {
        dim: resolved.system.dim(),
        std: belief.x.std().iter().copied().collect(),
        iterations: belief.iterations,
        stopping_reason: belief.stopping_reason,
        residual_norm: *belief.residual_norms.last().unwrap_or(&f64::NAN),
        reference_error,
        belief: belief.x,
    })
}

pub fn run(args: &LinsolveArgs, echo: &[String], stdin: &mut dyn Read) -> Result<Done, CliError> {
    let start = Instant::now();
    let spec = load_problem(&args.problem.problem, stdin)?;
    let result = solve(
        &spec,
        LinsolveOptions {
            rtol: args.rtol,
            atol: args.atol,
            maxiter: args.maxiter,
        },
    )?;
    let (code, status, stderr) = if result.stopping_reason == StoppingReason::Maxiter {
        (
            EXIT_NOT_CONVERGED,
            "maxiter",
            format!(
                "warning: iteration limit reached after {} iterations\n",
                result.iterations
            ),
        )
    } else {
        (EXIT_OK, "converged", String::new())
    };
    let report = RunReport::new(echo, args.seed, status, result, start.elapsed().as_secs_f64());
    Ok(Done {
        code,
        report: report.to_json(),
        out: args.out.clone(),
        stdout: String::new(),
        stderr,
    })
}
