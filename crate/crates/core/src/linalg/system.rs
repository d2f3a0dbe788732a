use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{argument, Result};
use crate::linops::{Dense, LinOp};

const PROBE_SEED: u64 = 0x5109_2e5d;

/// `A·x = b` with `A` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: LinOp,
    b: DVector<f64>,
    norm_estimate: f64,
}

impl LinearSystem {
    /// Validates shapes, finiteness of `b` and symmetry of `A`.
    ///
    /// Symmetry is checked with two seeded probe vectors `u, v`:
    /// `|uᵀA·v − vᵀA·u|` must be at most `1e-10·(‖A·u‖‖v‖ + ‖A·v‖‖u‖)`.
    pub fn new(a: LinOp, b: DVector<f64>) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows != cols {
            return Err(argument(format!("system matrix must be square, got {rows}×{cols}")));
        }
        if b.len() != rows {
            return Err(argument(format!(
                "right-hand side has length {}, expected {rows}",
                b.len()
            )));
        }
        if rows == 0 {
            return Err(argument("empty linear system"));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(argument("right-hand side has non-finite entries"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        let u = DVector::from_fn(rows, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = DVector::from_fn(rows, |_, _| rng.sample::<f64, _>(StandardNormal));
        let au = a.apply(&u)?;
        let av = a.apply(&v)?;
        if au.iter().chain(av.iter()).any(|x| !x.is_finite()) {
            return Err(argument("system matrix produced non-finite values"));
        }
        let scale = au.norm() * v.norm() + av.norm() * u.norm();
        if (u.dot(&av) - v.dot(&au)).abs() > 1e-10 * scale {
            return Err(argument("system matrix is not symmetric (probe test failed)"));
        }
        let rayleigh = u.dot(&au) / u.norm_squared();
        if !(rayleigh > 0.0) {
            return Err(argument("system matrix is not positive definite (probe vᵀAv ≤ 0)"));
        }
        let norm_estimate = rayleigh.max(v.dot(&av) / v.norm_squared());
        Ok(Self { a, b, norm_estimate })
    }

    /// Convenience constructor for a dense matrix.
    pub fn dense(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Self::new(LinOp::new(Dense::new(a).positive_definite()), b)
    }

    pub fn a(&self) -> &LinOp {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Lower bound on `‖A‖₂` from the probe Rayleigh quotients.
    pub fn norm_estimate(&self) -> f64 {
        self.norm_estimate
    }

    /// Hutchinson estimate of `trace(A)` from Rademacher probes.
    pub fn trace_estimate(&self, probes: usize, seed: u64) -> Result<f64> {
        let n = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for _ in 0..probes {
            let z = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
            total += z.dot(&self.a.apply(&z)?);
        }
        Ok(total / probes as f64)
    }

    pub fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.b - self.a.apply(x)?)
    }
}
