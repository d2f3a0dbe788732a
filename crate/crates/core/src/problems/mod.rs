//! Reference problems and their JSON descriptions.
//!
//! A [`ProblemSpec`] is a versioned JSON document:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "kind": "ivp",
//!   "parameters": { "type": "linear_decay", "y0": 1.0, "rate": 1.0, "t0": 0.0, "tmax": 1.0 },
//!   "reference_solution": { "provenance": "analytic", "times": [1.0], "values": [[0.36787944117144233]] }
//! }
//! ```
//!
//! Unknown fields are rejected at every level. [`builtin`] returns the named
//! reference problems.

mod spec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

pub use spec::{
    IntegrandSpec, IvpParams, KernelSpec, LinearSystemParams, Problem, ProblemKind, ProblemSpec, QuadParams, Reference,
    ResolvedLinearSystem, ResolvedQuad, SCHEMA_VERSION,
};

use crate::diffeq::{rk_solve, RkMethod};
use crate::error::{argument, Result};
use crate::linalg::LinearSystem;

/// Random symmetric positive-definite system with known solution.
#[derive(Debug, Clone)]
pub struct RandomSpdSystem {
    pub system: LinearSystem,
    pub matrix: DMatrix<f64>,
    pub solution: DVector<f64>,
}

/// `A = U·D·Uᵀ` with a seeded random orthogonal `U` and eigenvalues spaced
/// log-uniformly over `[1, condition]`; `x* ~ N(0, I)` and `b = A·x*`.
pub fn random_spd_system(n: usize, condition: f64, seed: u64) -> Result<RandomSpdSystem> {
    if n == 0 {
        return Err(argument("random SPD system needs n ≥ 1"));
    }
    if !(condition >= 1.0 && condition.is_finite()) {
        return Err(argument(format!(
            "condition target must be at least 1, got {condition}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let u = g.qr().q();
    let d = DVector::from_fn(n, |i, _| {
        if n == 1 {
            1.0
        } else {
            condition.powf(i as f64 / (n - 1) as f64)
        }
    });
    let a = &u * DMatrix::from_diagonal(&d) * u.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let x = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let b = &a * &x;
    Ok(RandomSpdSystem {
        system: LinearSystem::dense(a.clone(), b)?,
        matrix: a,
        solution: x,
    })
}

pub const BUILTIN_NAMES: [&str; 7] = [
    "hilbert10",
    "logistic",
    "lotka_volterra",
    "linear_decay",
    "genz_oscillatory_1d",
    "gauss_x2",
    "random_spd",
];

fn analytic(times: Option<Vec<f64>>, values: Vec<Vec<f64>>) -> Option<Reference> {
    Some(Reference {
        provenance: "analytic".into(),
        times,
        values,
    })
}

fn ivp_spec(params: IvpParams, times: Vec<f64>) -> Result<ProblemSpec> {
    let values = times
        .iter()
        .map(|&t| params.exact(t).map(|v| v.iter().copied().collect()))
        .collect::<Option<Vec<Vec<f64>>>>();
    let mut spec = ProblemSpec::new(ProblemKind::Ivp, serde_json::to_value(&params).expect("serializable"));
    spec.reference_solution = match values {
        Some(values) => analytic(Some(times), values),
        None => Some(Reference {
            provenance: "oracle:rk-tight".into(),
            values: rk_reference(&params, &times)?,
            times: Some(times),
        }),
    };
    Ok(spec)
}

/// RK4 with step 1e-3, sampled at the requested times (multiples of the step).
fn rk_reference(params: &IvpParams, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let ivp = params.resolve()?;
    let h = 1e-3;
    let (grid, values) = rk_solve(&ivp, RkMethod::Rk4, h)?;
    Ok(times
        .iter()
        .map(|&t| {
            let k = grid
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
                .map(|(k, _)| k)
                .unwrap();
            values[k].iter().copied().collect()
        })
        .collect())
}

/// `random_spd` or `random_spd(n=10, condition=100, seed=1)`.
fn parse_random_spd(name: &str) -> Result<ProblemSpec> {
    let (mut n, mut condition, mut seed) = (10usize, 100.0, 1u64);
    if let Some(args) = name.strip_prefix("random_spd") {
        let args = args.trim();
        if !args.is_empty() {
            let inner = args
                .strip_prefix('(')
                .and_then(|a| a.strip_suffix(')'))
                .ok_or_else(|| argument(format!("malformed builtin arguments in {name:?}")))?;
            for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (key, value) = part
                    .split_once('=')
                    .ok_or_else(|| argument(format!("expected key=value, got {part:?}")))?;
                let bad = || argument(format!("invalid value for {}: {value:?}", key.trim()));
                match key.trim() {
                    "n" => n = value.trim().parse().map_err(|_| bad())?,
                    "condition" => condition = value.trim().parse().map_err(|_| bad())?,
                    "seed" => seed = value.trim().parse().map_err(|_| bad())?,
                    other => return Err(argument(format!("unknown random_spd argument {other:?}"))),
                }
            }
        }
    }
    let params = LinearSystemParams::RandomSpd { n, condition, seed };
    let system = random_spd_system(n, condition, seed)?;
    let mut spec = ProblemSpec::new(
        ProblemKind::LinearSystem,
        serde_json::to_value(&params).expect("serializable"),
    );
    spec.reference_solution = Some(Reference {
        provenance: "analytic".into(),
        times: None,
        values: vec![system.solution.iter().copied().collect()],
    });
    Ok(spec)
}

fn quad_spec(params: QuadParams, exact: f64) -> ProblemSpec {
    let mut spec = ProblemSpec::new(ProblemKind::Quad, serde_json::to_value(&params).expect("serializable"));
    spec.reference_solution = analytic(None, vec![vec![exact]]);
    spec
}

/// Named reference problem; see [`BUILTIN_NAMES`].
pub fn builtin(name: &str) -> Result<ProblemSpec> {
    let name = name.trim();
    if name.starts_with("random_spd") {
        return parse_random_spd(name);
    }
    match name {
        "hilbert10" => {
            let mut spec = ProblemSpec::new(ProblemKind::LinearSystem, json!({"type": "hilbert", "n": 10}));
            spec.reference_solution = analytic(None, vec![vec![1.0; 10]]);
            Ok(spec)
        }
        "logistic" => ivp_spec(
            IvpParams::Logistic {
                y0: 0.5,
                t0: 0.0,
                tmax: 10.0,
            },
            (0..=10).map(f64::from).collect(),
        ),
        "linear_decay" => ivp_spec(
            IvpParams::LinearDecay {
                y0: 1.0,
                rate: 1.0,
                t0: 0.0,
                tmax: 1.0,
            },
            vec![0.0, 0.25, 0.5, 0.75, 1.0],
        ),
        "lotka_volterra" => ivp_spec(
            IvpParams::LotkaVolterra {
                alpha: 0.5,
                beta: 0.05,
                gamma: 0.5,
                delta: 0.02,
                y0: [20.0, 20.0],
                t0: 0.0,
                tmax: 20.0,
            },
            vec![0.0, 5.0, 10.0, 15.0, 20.0],
        ),
        "genz_oscillatory_1d" => {
            let (u, a) = (0.3, 5.0);
            let two_pi_u = 2.0 * std::f64::consts::PI * u;
            Ok(quad_spec(
                QuadParams {
                    dim: 1,
                    measure: crate::quad::Measure::lebesgue(vec![0.0], vec![1.0], false)?,
                    integrand: IntegrandSpec::GenzOscillatory { u, a: vec![a] },
                    nodes: None,
                    n_nodes: Some(30),
                    seed: Some(0),
                    kernel: KernelSpec {
                        lengthscales: vec![0.3],
                        output_scale: None,
                    },
                },
                ((two_pi_u + a).sin() - two_pi_u.sin()) / a,
            ))
        }
        "gauss_x2" => Ok(quad_spec(
            QuadParams {
                dim: 1,
                measure: crate::quad::Measure::gaussian(vec![0.0], vec![1.0])?,
                integrand: IntegrandSpec::Monomial { powers: vec![2] },
                nodes: None,
                n_nodes: Some(50),
                seed: Some(1),
                // a long lengthscale suits the global quadratic; at ℓ = 1 the
                // posterior std is 5-8x too small with i.i.d. nodes
                kernel: KernelSpec {
                    lengthscales: vec![8.0],
                    output_scale: None,
                },
            },
            1.0,
        )),
        _ => Err(argument(format!(
            "unknown builtin problem {name:?}; available: {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests;
