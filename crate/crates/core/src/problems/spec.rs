use std::fs;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::random_spd_system;
use crate::diffeq::Ivp;
use crate::error::{argument, Error, Result};
use crate::linalg::LinearSystem;
use crate::quad::{Measure, QuadProblem, SquaredExpKernel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    LinearSystem,
    Ivp,
    Quad,
}

/// Known solution, with where it came from: `"analytic"` or `"oracle:<name>"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub provenance: String,
    /// Evaluation times, for IVPs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// One row per time for IVPs; the solution vector for linear systems; a
    /// single value for integrals.
    pub values: Vec<Vec<f64>>,
}

/// Serialized problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub schema_version: u32,
    pub kind: ProblemKind,
    pub parameters: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<Reference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinearSystemParams {
    /// Row-major matrix and right-hand side.
    Dense {
        matrix: Vec<Vec<f64>>,
        rhs: Vec<f64>,
    },
    RandomSpd {
        n: usize,
        condition: f64,
        seed: u64,
    },
    /// Hilbert matrix with right-hand side `A·1`.
    Hilbert {
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum IvpParams {
    /// `ẏ = y(1 − y)`.
    Logistic { y0: f64, t0: f64, tmax: f64 },
    /// `ẏ = −rate·y`.
    LinearDecay { y0: f64, rate: f64, t0: f64, tmax: f64 },
    /// `ẋ = αx − βxy`, `ẏ = δxy − γy`.
    LotkaVolterra {
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        y0: [f64; 2],
        t0: f64,
        tmax: f64,
    },
    /// `ẏ = A·y` with a row-major `A`.
    Linear {
        matrix: Vec<Vec<f64>>,
        y0: Vec<f64>,
        t0: f64,
        tmax: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrandSpec {
    Constant {
        value: f64,
    },
    /// `∏ᵢ xᵢ^pᵢ`.
    Monomial {
        powers: Vec<u32>,
    },
    /// Genz oscillatory family `cos(2πu + aᵀx)`.
    GenzOscillatory {
        u: f64,
        a: Vec<f64>,
    },
}

/// Kernel description; a missing output scale is fitted to the node values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub lengthscales: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadParams {
    pub dim: usize,
    pub measure: Measure,
    pub integrand: IntegrandSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub kernel: KernelSpec,
}

/// A linear system ready to solve, with its matrix kept for reporting.
#[derive(Debug, Clone)]
pub struct ResolvedLinearSystem {
    pub system: LinearSystem,
    pub matrix: DMatrix<f64>,
}

/// A quadrature problem ready to solve.
#[derive(Debug, Clone)]
pub struct ResolvedQuad {
    pub problem: QuadProblem,
    pub params: QuadParams,
}

impl ResolvedQuad {
    pub fn nodes(&self) -> Option<DMatrix<f64>> {
        self.params
            .nodes
            .as_ref()
            .map(|rows| rows_to_matrix(rows, self.params.dim))
    }

    /// The kernel, with a missing output scale replaced by `fallback`.
    pub fn kernel(&self, fallback: f64) -> Result<SquaredExpKernel> {
        let spec = &self.params.kernel;
        SquaredExpKernel::new(spec.lengthscales.clone(), spec.output_scale.unwrap_or(fallback))
    }
}

#[derive(Debug, Clone)]
pub enum Problem {
    LinearSystem(ResolvedLinearSystem),
    Ivp(Ivp),
    Quad(ResolvedQuad),
}

fn rows_to_matrix(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

fn check_rows(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<()> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(argument(format!(
            "{what} row {i} has {} entries, expected {cols}",
            r.len()
        )));
    }
    Ok(())
}

impl LinearSystemParams {
    pub fn resolve(&self) -> Result<ResolvedLinearSystem> {
        let (matrix, rhs) = match self {
            Self::Dense { matrix, rhs } => {
                let n = rhs.len();
                if matrix.len() != n {
                    return Err(argument(format!(
                        "matrix has {} rows for a right-hand side of length {n}",
                        matrix.len()
                    )));
                }
                check_rows(matrix, n, "matrix")?;
                (rows_to_matrix(matrix, n), DVector::from_column_slice(rhs))
            }
            Self::RandomSpd { n, condition, seed } => {
                let r = random_spd_system(*n, *condition, *seed)?;
                return Ok(ResolvedLinearSystem {
                    system: r.system,
                    matrix: r.matrix,
                });
            }
            Self::Hilbert { n } => {
                if *n == 0 {
                    return Err(argument("Hilbert matrix needs n ≥ 1"));
                }
                let a = hilbert(*n);
                let b = &a * DVector::from_element(*n, 1.0);
                (a, b)
            }
        };
        Ok(ResolvedLinearSystem {
            system: LinearSystem::dense(matrix.clone(), rhs)?,
            matrix,
        })
    }
}

pub(crate) fn hilbert(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| 1.0 / (i + j + 1) as f64)
}

impl IvpParams {
    pub fn resolve(&self) -> Result<Ivp> {
        match self.clone() {
            Self::Logistic { y0, t0, tmax } => Ok(Ivp::new(
                |y: &DVector<f64>, _| y.map(|v| v * (1.0 - v)),
                t0,
                tmax,
                DVector::from_element(1, y0),
            )?
            .with_jacobian(|y: &DVector<f64>, _| DMatrix::from_element(1, 1, 1.0 - 2.0 * y[0]))),
            Self::LinearDecay { y0, rate, t0, tmax } => Ok(Ivp::new(
                move |y: &DVector<f64>, _| y * -rate,
                t0,
                tmax,
                DVector::from_element(1, y0),
            )?
            .with_jacobian(move |_, _| DMatrix::from_element(1, 1, -rate))),
            Self::LotkaVolterra {
                alpha,
                beta,
                gamma,
                delta,
                y0,
                t0,
                tmax,
            } => Ok(Ivp::new(
                move |y: &DVector<f64>, _| {
                    DVector::from_vec(vec![
                        alpha * y[0] - beta * y[0] * y[1],
                        delta * y[0] * y[1] - gamma * y[1],
                    ])
                },
                t0,
                tmax,
                DVector::from_column_slice(&y0),
            )?
            .with_jacobian(move |y: &DVector<f64>, _| {
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[alpha - beta * y[1], -beta * y[0], delta * y[1], delta * y[0] - gamma],
                )
            })),
            Self::Linear { matrix, y0, t0, tmax } => {
                let n = y0.len();
                if matrix.len() != n {
                    return Err(argument(format!(
                        "matrix has {} rows for y0 of length {n}",
                        matrix.len()
                    )));
                }
                check_rows(&matrix, n, "matrix")?;
                let a = rows_to_matrix(&matrix, n);
                let jac = a.clone();
                Ok(
                    Ivp::new(move |y: &DVector<f64>, _| &a * y, t0, tmax, DVector::from_vec(y0))?
                        .with_jacobian(move |_, _| jac.clone()),
                )
            }
        }
    }

    /// Closed-form solution where one exists.
    pub fn exact(&self, t: f64) -> Option<DVector<f64>> {
        match *self {
            Self::Logistic { y0, t0, .. } => {
                let e = (-(t - t0)).exp();
                Some(DVector::from_element(1, y0 / (y0 + (1.0 - y0) * e)))
            }
            Self::LinearDecay { y0, rate, t0, .. } => Some(DVector::from_element(1, y0 * (-rate * (t - t0)).exp())),
            _ => None,
        }
    }
}

impl IntegrandSpec {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Monomial { powers } => powers.iter().zip(x.iter()).map(|(p, v)| v.powi(*p as i32)).product(),
            Self::GenzOscillatory { u, a } => {
                (2.0 * std::f64::consts::PI * u + a.iter().zip(x.iter()).map(|(ai, v)| ai * v).sum::<f64>()).cos()
            }
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Self::Constant { .. } => None,
            Self::Monomial { powers } => Some(powers.len()),
            Self::GenzOscillatory { a, .. } => Some(a.len()),
        }
    }
}

impl QuadParams {
    pub fn resolve(&self) -> Result<ResolvedQuad> {
        self.measure.validate()?;
        if self.measure.dim() != self.dim {
            return Err(argument(format!(
                "measure has dimension {} but dim is {}",
                self.measure.dim(),
                self.dim
            )));
        }
        if let Some(d) = self.integrand.dim().filter(|d| *d != self.dim) {
            return Err(argument(format!("integrand has dimension {d} but dim is {}", self.dim)));
        }
        if self.kernel.lengthscales.len() != self.dim {
            return Err(argument(format!(
                "kernel has {} lengthscales but dim is {}",
                self.kernel.lengthscales.len(),
                self.dim
            )));
        }
        if let Some(nodes) = &self.nodes {
            check_rows(nodes, self.dim, "nodes")?;
        }
        // validates the lengthscales and an explicit output scale
        SquaredExpKernel::new(
            self.kernel.lengthscales.clone(),
            self.kernel.output_scale.unwrap_or(1.0),
        )?;
        let integrand = self.integrand.clone();
        Ok(ResolvedQuad {
            problem: QuadProblem::new(move |x| integrand.eval(x), self.measure.clone())?,
            params: self.clone(),
        })
    }
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, parameters: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind,
            parameters,
            reference_solution: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(parse_error)?;
        spec.check()?;
        Ok(spec)
    }

    pub fn from_reader(mut reader: impl Read) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json_str(&text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(parse_error)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }

    /// Schema version and kind-specific parameters parse.
    pub fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match self.kind {
            ProblemKind::LinearSystem => self.linear_system_params().map(|_| ()),
            ProblemKind::Ivp => self.ivp_params().map(|_| ()),
            ProblemKind::Quad => self.quad_params().map(|_| ()),
        }
    }

    fn params<T: serde::de::DeserializeOwned>(&self, kind: ProblemKind) -> Result<T> {
        if self.kind != kind {
            return Err(argument(format!("problem is of kind {:?}, not {kind:?}", self.kind)));
        }
        serde_json::from_value(self.parameters.clone()).map_err(|e| Error::Parse(format!("parameters: {e}")))
    }

    pub fn linear_system_params(&self) -> Result<LinearSystemParams> {
        self.params(ProblemKind::LinearSystem)
    }

    pub fn ivp_params(&self) -> Result<IvpParams> {
        self.params(ProblemKind::Ivp)
    }

    pub fn quad_params(&self) -> Result<QuadParams> {
        self.params(ProblemKind::Quad)
    }

    pub fn resolve(&self) -> Result<Problem> {
        Ok(match self.kind {
            ProblemKind::LinearSystem => Problem::LinearSystem(self.linear_system_params()?.resolve()?),
            ProblemKind::Ivp => Problem::Ivp(self.ivp_params()?.resolve()?),
            ProblemKind::Quad => Problem::Quad(self.quad_params()?.resolve()?),
        })
    }
}
