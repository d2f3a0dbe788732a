use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pnkit", version, about = "Probabilistic numerical solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a symmetric positive-definite linear system.
    Linsolve(LinsolveArgs),
    /// Solve an ordinary differential equation.
    Odesolve(OdesolveArgs),
    /// Estimate an integral by Bayesian quadrature.
    Quad(QuadArgs),
    /// Run a benchmark suite and gate on its tolerances.
    Bench(BenchArgs),
}

/// Problem file, `-` for stdin, or a builtin name.
#[derive(Debug, Args)]
pub struct ProblemArg {
    pub problem: String,
}

#[derive(Debug, Args)]
pub struct LinsolveArgs {
    #[command(flatten)]
    pub problem: ProblemArg,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub maxiter: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OdeMethod {
    Ek0,
    Ek1,
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseMethod {
    Euler,
    Rk4,
}

#[derive(Debug, Args)]
pub struct OdesolveArgs {
    #[command(flatten)]
    pub problem: ProblemArg,
    /// Number of derivatives in the integrated Wiener process prior.
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    #[arg(long, value_enum, default_value_t = OdeMethod::Ek1)]
    pub method: OdeMethod,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    /// Fixed step size; adaptive steps when absent (the perturbed solver
    /// then uses 1/100 of the interval).
    #[arg(long)]
    pub grid: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated evaluation times.
    #[arg(long, value_delimiter = ',')]
    pub eval: Option<Vec<f64>>,
    /// Base method of the perturbed solver.
    #[arg(long, value_enum, default_value_t = BaseMethod::Rk4)]
    pub base: BaseMethod,
    /// Perturbation scale of the perturbed solver.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 20)]
    pub ensemble_size: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("node_source").args(["n_nodes", "nodes_file"]).required(true).multiple(false)))]
pub struct QuadArgs {
    #[command(flatten)]
    pub problem: ProblemArg,
    /// Number of Bayesian Monte Carlo nodes drawn from the measure.
    #[arg(long)]
    pub n_nodes: Option<usize>,
    /// JSON array of node coordinates, one array per node.
    #[arg(long)]
    pub nodes_file: Option<PathBuf>,
    /// Defaults to the problem's seed, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub optimize_lengthscale: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub suite: String,
    /// Directory for per-problem reports and `summary.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON object overriding row tolerances, e.g. `{"quad_gauss_x2": 0.1}`.
    #[arg(long)]
    pub tolerances: Option<PathBuf>,
}
