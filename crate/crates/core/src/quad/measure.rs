use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};

/// Integration measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Measure {
    /// `N(mean, diag(var))` on all of ℝⁿ.
    Gaussian { mean: Vec<f64>, var: Vec<f64> },
    /// Lebesgue measure on the box `[lower, upper]`, divided by the box
    /// volume when `normalize` is set.
    LebesgueBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default)]
        normalize: bool,
    },
}

impl Measure {
    pub fn gaussian(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        let m = Self::Gaussian { mean, var };
        m.validate()?;
        Ok(m)
    }

    pub fn lebesgue(lower: Vec<f64>, upper: Vec<f64>, normalize: bool) -> Result<Self> {
        let m = Self::LebesgueBox {
            lower,
            upper,
            normalize,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { mean, var } => {
                if mean.is_empty() || mean.len() != var.len() {
                    return Err(argument(format!(
                        "Gaussian measure needs mean and variance of equal nonzero length, got {} and {}",
                        mean.len(),
                        var.len()
                    )));
                }
                if mean.iter().any(|v| !v.is_finite()) {
                    return Err(argument("Gaussian measure mean must be finite"));
                }
                if let Some(v) = var.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                    return Err(argument(format!(
                        "Gaussian measure variances must be positive, got {v}"
                    )));
                }
            }
            Self::LebesgueBox { lower, upper, .. } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(argument(format!(
                        "box bounds need equal nonzero length, got {} and {}",
                        lower.len(),
                        upper.len()
                    )));
                }
                for (i, (a, b)) in lower.iter().zip(upper).enumerate() {
                    if !(a.is_finite() && b.is_finite() && a < b) {
                        return Err(argument(format!(
                            "box bounds must satisfy a < b, axis {i} has [{a}, {b}]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::LebesgueBox { lower, .. } => lower.len(),
        }
    }

    /// Total mass: 1 for probability measures, the box volume otherwise.
    pub fn mass(&self) -> f64 {
        match self {
            Self::LebesgueBox {
                lower,
                upper,
                normalize: false,
            } => lower.iter().zip(upper).map(|(a, b)| b - a).product(),
            _ => 1.0,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Self::Gaussian { .. } => x.iter().all(|v| v.is_finite()),
            Self::LebesgueBox { lower, upper, .. } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (a, b))| *v >= *a && *v <= *b),
        }
    }

    /// `count` i.i.d. nodes (one per row) from the measure, normalized to a
    /// probability distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(count, n);
        for i in 0..count {
            for j in 0..n {
                out[(i, j)] = match self {
                    Self::Gaussian { mean, var } => mean[j] + var[j].sqrt() * rng.sample::<f64, _>(StandardNormal),
                    Self::LebesgueBox { lower, upper, .. } => rng.random_range(lower[j]..upper[j]),
                };
            }
        }
        out
    }
}

pub type Integrand = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// `F = ∫ f(x) dμ(x)`.
#[derive(Clone)]
pub struct QuadProblem {
    integrand: Integrand,
    measure: Measure,
}

impl fmt::Debug for QuadProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuadProblem").field("measure", &self.measure).finish()
    }
}

impl QuadProblem {
    pub fn new(integrand: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static, measure: Measure) -> Result<Self> {
        measure.validate()?;
        Ok(Self {
            integrand: Arc::new(integrand),
            measure,
        })
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn dim(&self) -> usize {
        self.measure.dim()
    }

    /// `f` at each row of `nodes`.
    pub fn evaluate(&self, nodes: &DMatrix<f64>) -> Result<DVector<f64>> {
        if nodes.ncols() != self.dim() {
            return Err(argument(format!(
                "nodes have {} columns for a {}-dimensional problem",
                nodes.ncols(),
                self.dim()
            )));
        }
        let values = DVector::from_fn(nodes.nrows(), |i, _| (self.integrand)(&nodes.row(i).transpose()));
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(crate::error::numerical(format!("integrand is not finite at node {i}")));
        }
        Ok(values)
    }
}
