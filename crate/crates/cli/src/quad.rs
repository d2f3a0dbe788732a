use std::io::Read;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use pnkit::problems::{Problem, ProblemSpec};
use pnkit::quad::{bq_integrate, optimize_lengthscale, output_scale_mle, SquaredExpKernel};
use pnkit::randvars::Gaussian;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::QuadArgs;
use crate::input::load_problem;
use crate::report::RunReport;
use crate::{CliError, Done, EXIT_OK};

#[derive(Debug, Clone, Serialize)]
pub struct QuadResult {
    pub belief: Gaussian,
    pub mean: f64,
    pub std: f64,
    pub node_count: usize,
    pub kernel: SquaredExpKernel,
    pub jitter: f64,
    pub reference: Option<f64>,
    pub error: Option<f64>,
    pub warnings: Vec<String>,
}

/// Where the nodes come from.
#[derive(Debug, Clone)]
pub enum NodeSource {
    /// Bayesian Monte Carlo draws from the measure.
    Sample(usize),
    Given(DMatrix<f64>),
    /// Whatever the problem file specifies.
    Problem,
}

#[derive(Debug, Clone)]
pub struct QuadOptions {
    pub nodes: NodeSource,
    pub seed: Option<u64>,
    pub optimize_lengthscale: bool,
}

pub fn read_nodes(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Failure(format!("cannot read {}: {e}", path.display())))?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
        .map_err(|e| CliError::Failure(format!("{}: expected a JSON array of node arrays: {e}", path.display())))?;
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(CliError::Failure(format!(
            "{}: nodes have differing lengths",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]))
}

/// Seed resolution: explicit, then the problem's, then 0.
pub fn solve(spec: &ProblemSpec, options: &QuadOptions) -> Result<(QuadResult, u64), CliError> {
    let resolved = match spec.resolve()? {
        Problem::Quad(q) => q,
        _ => {
            return Err(CliError::Failure(format!(
                "problem of kind {:?} is not a quadrature problem",
                spec.kind
            )))
        }
    };
    let dim = resolved.params.dim;
    let seed = options.seed.or(resolved.params.seed).unwrap_or(0);
    let nodes = match &options.nodes {
        NodeSource::Given(n) => n.clone(),
        NodeSource::Sample(count) => resolved
            .problem
            .measure()
            .sample(&mut ChaCha8Rng::seed_from_u64(seed), *count),
        NodeSource::Problem => match (resolved.nodes(), resolved.params.n_nodes) {
            (Some(n), _) => n,
            (None, Some(count)) => resolved
                .problem
                .measure()
                .sample(&mut ChaCha8Rng::seed_from_u64(seed), count),
            (None, None) => return Err(CliError::Usage("no nodes: pass --n-nodes or --nodes-file".into())),
        },
    };
    if nodes.nrows() > 0 && nodes.ncols() != dim {
        return Err(CliError::Failure(format!(
            "nodes have dimension {} but the problem has {dim}",
            nodes.ncols()
        )));
    }
    let nodes = if nodes.nrows() == 0 {
        DMatrix::zeros(0, dim)
    } else {
        nodes
    };
    let values = resolved.problem.evaluate(&nodes)?;
    let mut warnings = Vec::new();

    let kernel = if options.optimize_lengthscale {
        if nodes.nrows() < 2 {
            return Err(CliError::Failure(
                "lengthscale optimization needs at least two nodes".into(),
            ));
        }
        let fit = optimize_lengthscale(&nodes, &values, None)?;
        warnings.extend(fit.warnings);
        fit.kernel
    } else if let Some(c) = resolved.params.kernel.output_scale {
        SquaredExpKernel::new(resolved.params.kernel.lengthscales.clone(), c)?
    } else if nodes.nrows() > 0 {
        let scale = output_scale_mle(&resolved.params.kernel.lengthscales, &nodes, &values)?;
        if scale > 0.0 && scale.is_finite() {
            resolved.kernel(scale)?
        } else {
            warnings.push("output scale estimate is not positive; using 1".into());
            resolved.kernel(1.0)?
        }
    } else {
        resolved.kernel(1.0)?
    };

    let state = bq_integrate(&resolved.problem, nodes, &kernel)?;
    let belief = state.belief()?;
    let reference = spec
        .reference_solution
        .as_ref()
        .and_then(|r| r.values.first())
        .and_then(|v| v.first())
        .copied();
    let mean = state.mean();
    Ok((
        QuadResult {
            mean,
            std: state.variance().sqrt(),
            node_count: state.len(),
            kernel,
            jitter: state.jitter,
            error: reference.map(|r| (mean - r).abs()),
            reference,
            warnings,
            belief,
        },
        seed,
    ))
}

pub fn run(args: &QuadArgs, echo: &[String], stdin: &mut dyn Read) -> Result<Done, CliError> {
    let start = Instant::now();
    let spec = load_problem(&args.problem.problem, stdin)?;
    let nodes = match (&args.nodes_file, args.n_nodes) {
        (Some(path), _) => NodeSource::Given(read_nodes(path)?),
        (None, Some(n)) => NodeSource::Sample(n),
        (None, None) => NodeSource::Problem,
    };
    let (result, seed) = solve(
        &spec,
        &QuadOptions {
            nodes,
            seed: args.seed,
            optimize_lengthscale: args.optimize_lengthscale,
        },
    )?;
    let stderr: String = result.warnings.iter().map(|w| format!("warning: {w}\n")).collect();
    let report = RunReport::new(echo, seed, "ok", result, start.elapsed().as_secs_f64());
    Ok(Done {
        code: EXIT_OK,
        report: report.to_json(),
        out: args.out.clone(),
        stdout: String::new(),
        stderr,
    })
}
