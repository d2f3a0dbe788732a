use std::f64::consts::PI;

use libm::{erf, erfc};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::measure::Measure;
use crate::error::{argument, Result};

/// `k(x, x′) = σ_f²·exp(−½·Σᵢ (xᵢ − x′ᵢ)²/ℓᵢ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquaredExpKernel {
    pub lengthscales: Vec<f64>,
    pub output_scale: f64,
}

impl SquaredExpKernel {
    pub fn new(lengthscales: Vec<f64>, output_scale: f64) -> Result<Self> {
        let k = Self {
            lengthscales,
            output_scale,
        };
        k.validate()?;
        Ok(k)
    }

    /// Same lengthscale on every axis.
    pub fn isotropic(dim: usize, lengthscale: f64, output_scale: f64) -> Result<Self> {
        Self::new(vec![lengthscale; dim], output_scale)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(argument("kernel needs at least one lengthscale"));
        }
        if let Some(l) = self.lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(argument(format!("lengthscales must be positive, got {l}")));
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return Err(argument(format!(
                "output scale must be positive, got {}",
                self.output_scale
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| ((a - b) / l).powi(2))
            .sum();
        self.output_scale * (-0.5 * r2).exp()
    }

    /// Gram matrix of the rows of `nodes`.
    pub fn gram(&self, nodes: &DMatrix<f64>) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = nodes.row_iter().map(|r| r.iter().copied().collect()).collect();
        let k = rows.len();
        DMatrix::from_fn(k, k, |i, j| self.eval(&rows[i], &rows[j]))
    }

    fn check_measure(&self, measure: &Measure) -> Result<()> {
        self.validate()?;
        measure.validate()?;
        if measure.dim() != self.dim() {
            return Err(argument(format!(
                "kernel of dimension {} cannot be paired with a {}-dimensional measure",
                self.dim(),
                measure.dim()
            )));
        }
        Ok(())
    }

    /// `∫ k(x, x′) dμ(x′)`.
    pub fn kernel_mean(&self, measure: &Measure, x: &[f64]) -> Result<f64> {
        self.check_measure(measure)?;
        if x.len() != self.dim() {
            return Err(argument(format!(
                "point of dimension {} for a {}-dimensional kernel",
                x.len(),
                self.dim()
            )));
        }
        let product: f64 = match measure {
            Measure::Gaussian { mean, var } => (0..self.dim())
                .map(|i| {
                    let s2 = self.lengthscales[i].powi(2) + var[i];
                    self.lengthscales[i] / s2.sqrt() * (-0.5 * (x[i] - mean[i]).powi(2) / s2).exp()
                })
                .product(),
            Measure::LebesgueBox {
                lower,
                upper,
                normalize,
            } => (0..self.dim())
                .map(|i| {
                    let l = self.lengthscales[i];
                    let c = std::f64::consts::SQRT_2 * l;
                    let axis = l * (PI / 2.0).sqrt() * erf_diff((upper[i] - x[i]) / c, (lower[i] - x[i]) / c);
                    if *normalize {
                        axis / (upper[i] - lower[i])
                    } else {
                        axis
                    }
                })
                .product(),
        };
        Ok(self.output_scale * product)
    }

    /// Kernel means at every row of `nodes`.
    pub fn kernel_means(&self, measure: &Measure, nodes: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut z = DVector::zeros(nodes.nrows());
        for (i, row) in nodes.row_iter().enumerate() {
            let x: Vec<f64> = row.iter().copied().collect();
            z[i] = self.kernel_mean(measure, &x)?;
        }
        Ok(z)
    }

    /// Prior variance of the integral, `∬ k(x, x′) dμ(x) dμ(x′)`.
    pub fn initial_error(&self, measure: &Measure) -> Result<f64> {
        self.check_measure(measure)?;
        let product: f64 = match measure {
            Measure::Gaussian { var, .. } => (0..self.dim())
                .map(|i| {
                    let l = self.lengthscales[i];
                    l / (l * l + 2.0 * var[i]).sqrt()
                })
                .product(),
            Measure::LebesgueBox {
                lower,
                upper,
                normalize,
            } => (0..self.dim())
                .map(|i| {
                    let w = upper[i] - lower[i];
                    let axis = box_double_integral(w, self.lengthscales[i]);
                    if *normalize {
                        axis / (w * w)
                    } else {
                        axis
                    }
                })
                .product(),
        };
        Ok(self.output_scale * product)
    }
}

/// `erf(p) − erf(q)`, through `erfc` when both arguments share a sign so
/// that far tails do not cancel.
fn erf_diff(p: f64, q: f64) -> f64 {
    if p > 0.0 && q > 0.0 {
        erfc(q) - erfc(p)
    } else if p < 0.0 && q < 0.0 {
        erfc(-p) - erfc(-q)
    } else {
        erf(p) - erf(q)
    }
}

/// `∫₀ʷ∫₀ʷ exp(−(x − y)²/(2ℓ²)) dx dy = 2∫₀ʷ (w − u)·exp(−u²/(2ℓ²)) du`.
fn box_double_integral(w: f64, l: f64) -> f64 {
    let r = w / l;
    if r < 0.1 {
        // series in r², which avoids the cancellation of the closed form
        let mut term = w * w;
        let mut total = 0.0;
        for k in 0..10 {
            let kf = k as f64;
            total += term / ((2.0 * kf + 1.0) * (2.0 * kf + 2.0));
            term *= -r * r / (2.0 * (kf + 1.0));
        }
        return 2.0 * total;
    }
    let tail = -(-0.5 * r * r).exp_m1();
    2.0 * (w * l * (PI / 2.0).sqrt() * erf(r / std::f64::consts::SQRT_2) - l * l * tail)
}
