use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dense::{self, max_diag, symmetrize};
use crate::error::{argument, numerical, Error, Result};
use crate::linops::LinOp;

/// Relative eigenvalue slack below zero tolerated in a covariance.
const PSD_TOLERANCE: f64 = 1e-10;

/// A multivariate normal belief `N(mean, cov)`.
///
/// The covariance is symmetrized on construction and validated to be
/// positive semidefinite. A lower-triangular factor is computed on first use
/// and cached; beliefs created from a factor carry it from the start.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    #[serde(skip)]
    factor: OnceLock<DMatrix<f64>>,
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

fn check_shapes(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<()> {
    let n = mean.len();
    if n == 0 {
        return Err(argument("a Gaussian needs at least one dimension"));
    }
    if cov.shape() != (n, n) {
        return Err(argument(format!(
            "covariance of shape {:?} does not match mean of length {n}",
            cov.shape()
        )));
    }
    if mean.iter().any(|v| !v.is_finite()) || !dense::is_finite(cov) {
        return Err(argument("mean and covariance must be finite"));
    }
    Ok(())
}

fn check_psd(cov: &DMatrix<f64>, scale: f64) -> Result<()> {
    let min_eig = cov
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &e| acc.min(e));
    let floor = -PSD_TOLERANCE * scale.max(max_diag(cov));
    if min_eig < floor || (min_eig < 0.0 && floor == 0.0) {
        return Err(argument(format!(
            "covariance is not positive semidefinite (smallest eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_shapes(&mean, &cov)?;
        let cov = symmetrize(&cov);
        check_psd(&cov, 0.0)?;
        Ok(Self::unchecked(mean, cov))
    }

    /// Builds a belief whose covariance is a computed result rather than user
    /// input. The PSD check is taken relative to `scale`, the magnitude of the
    /// covariance the result was derived from, so that roundoff in a
    /// near-zero posterior is not mistaken for indefiniteness.
    pub(crate) fn derived(mean: DVector<f64>, cov: DMatrix<f64>, scale: f64) -> Result<Self> {
        check_shapes(&mean, &cov).map_err(|e| numerical(format!("derived belief is invalid: {e}")))?;
        let cov = symmetrize(&cov);
        check_psd(&cov, scale).map_err(|e| match e {
            Error::Argument(msg) => numerical(msg),
            other => other,
        })?;
        Ok(Self::unchecked(mean, cov))
    }

    fn unchecked(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            mean,
            cov,
            factor: OnceLock::new(),
        }
    }

    /// `N(mean, L·Lᵀ)`; `factor` need not be triangular.
    pub fn from_factor(mean: DVector<f64>, factor: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if factor.nrows() != n {
            return Err(argument(format!(
                "factor with {} rows does not match mean of length {n}",
                factor.nrows()
            )));
        }
        let lower = if factor.ncols() == n && is_lower(&factor) && factor.diagonal().iter().all(|&d| d >= 0.0) {
            factor
        } else {
            dense::tria(&factor)
        };
        let cov = &lower * lower.transpose();
        check_shapes(&mean, &cov)?;
        let g = Self::unchecked(mean, symmetrize(&cov));
        let _ = g.factor.set(lower);
        Ok(g)
    }

    /// Point mass at `mean`.
    pub fn deterministic(mean: DVector<f64>) -> Result<Self> {
        let n = mean.len();
        Self::from_factor(mean, DMatrix::zeros(n, n))
    }

    pub fn standard(n: usize) -> Result<Self> {
        Self::from_factor(DVector::zeros(n), DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }

    /// Marginal standard deviations, with tiny negative roundoff clamped to zero.
    pub fn std(&self) -> DVector<f64> {
        self.cov.diagonal().map(|v| v.max(0.0).sqrt())
    }

    /// Lower-triangular `L` with `L·Lᵀ = cov`, computed once.
    pub fn cov_factor(&self) -> Result<&DMatrix<f64>> {
        if let Some(l) = self.factor.get() {
            return Ok(l);
        }
        let l = dense::psd_factor(&self.cov)?;
        Ok(self.factor.get_or_init(|| l))
    }

    /// `A·x + b` for `x` distributed as `self`.
    pub fn affine_transform(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        if a.ncols() != self.dim() {
            return Err(argument(format!(
                "map with {} columns applied to Gaussian of dimension {}",
                a.ncols(),
                self.dim()
            )));
        }
        if b.len() != a.nrows() {
            return Err(argument(format!(
                "offset of length {} does not match map with {} rows",
                b.len(),
                a.nrows()
            )));
        }
        let mean = a * &self.mean + b;
        let cov = a * &self.cov * a.transpose();
        let scale = max_diag(&self.cov) * a.amax().powi(2) * a.ncols() as f64;
        Self::derived(mean, cov, scale)
    }

    /// Affine transformation through a matrix-free operator.
    pub fn linop_transform(&self, op: &LinOp, b: &DVector<f64>) -> Result<Self> {
        let a_cov = op.apply_matrix(&self.cov)?;
        let cov = op.apply_matrix(&a_cov.transpose())?;
        if b.len() != op.rows() {
            return Err(argument(format!(
                "offset of length {} does not match operator with {} rows",
                b.len(),
                op.rows()
            )));
        }
        let mean = op.apply(&self.mean)? + b;
        let scale = max_diag(&cov).max(max_diag(&self.cov));
        Self::derived(mean, cov, scale)
    }

    /// `count` draws, one per row, as `mean + L·z` with `z` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(argument("sample count must be positive"));
        }
        let n = self.dim();
        let l = self.cov_factor()?;
        let z = DMatrix::from_fn(n, count, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut draws = l * z;
        for mut col in draws.column_iter_mut() {
            col += &self.mean;
        }
        Ok(draws.transpose())
    }

    /// Posterior of `x` after observing `y = H·x + ε`, `ε ~ N(0, R)`.
    pub fn condition_on_linear_observation(
        &self,
        h: &DMatrix<f64>,
        r: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> Result<Self> {
        let n = self.dim();
        let m = h.nrows();
        if h.ncols() != n || r.shape() != (m, m) || y.len() != m {
            return Err(argument(format!(
                "observation shapes H {:?}, R {:?}, y {} incompatible with dimension {n}",
                h.shape(),
                r.shape(),
                y.len()
            )));
        }
        let hp = h * &self.cov;
        let s = symmetrize(&(&hp * h.transpose() + r));
        check_innovation(&s)?;
        let chol =
            dense::strict_cholesky(&s).ok_or_else(|| numerical("innovation covariance is not positive definite"))?;
        // Kᵀ = S⁻¹·H·P
        let gain_t = chol.solve(&hp);
        let residual = y - h * &self.mean;
        let mean = &self.mean + gain_t.tr_mul(&residual);
        let cov = &self.cov - hp.transpose() * &gain_t;
        Self::derived(mean, cov, max_diag(&self.cov))
    }

    /// Restriction to the coordinates in `indices`, in the given order.
    pub fn marginal(&self, indices: &[usize]) -> Result<Self> {
        let n = self.dim();
        if indices.is_empty() {
            return Err(argument("marginal needs at least one index"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(argument(format!("index {bad} out of range for dimension {n}")));
        }
        let mut seen = vec![false; n];
        for &i in indices {
            if std::mem::replace(&mut seen[i], true) {
                return Err(argument(format!("duplicate marginal index {i}")));
            }
        }
        let mean = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(indices.len(), indices.len(), |a, b| self.cov[(indices[a], indices[b])]);
        Ok(Self::unchecked(mean, cov))
    }

    /// Same mean, covariance multiplied by `alpha ≥ 0`. A cached factor is
    /// rescaled by `√alpha`.
    pub fn scale_cov(&self, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(argument(format!(
                "covariance scale must be finite and nonnegative, got {alpha}"
            )));
        }
        let g = Self::unchecked(self.mean.clone(), &self.cov * alpha);
        if let Some(l) = self.factor.get() {
            let _ = g.factor.set(l * alpha.sqrt());
        }
        Ok(g)
    }
}

fn is_lower(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| ((i + 1)..m.ncols()).all(|j| m[(i, j)] == 0.0))
}

/// Rejects innovation covariances that are numerically singular.
pub(crate) fn check_innovation(s: &DMatrix<f64>) -> Result<()> {
    // Exact observations of nearly known states legitimately give tiny S, so
    // only the conditioning of S itself is judged.
    let eig = s.clone().symmetric_eigenvalues();
    let min_eig = eig.iter().fold(f64::INFINITY, |acc, &e| acc.min(e));
    let max_eig = eig.iter().fold(0.0_f64, |acc, &e| acc.max(e));
    if !(max_eig > f64::MIN_POSITIVE && min_eig > 1e-14 * max_eig) {
        return Err(numerical(format!(
            "singular innovation covariance (eigenvalues in [{min_eig:e}, {max_eig:e}])"
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl From<Gaussian> for GaussianRepr {
    fn from(g: Gaussian) -> Self {
        let cov = g.cov.row_iter().map(|row| row.iter().copied().collect()).collect();
        Self {
            mean: g.mean.iter().copied().collect(),
            cov,
        }
    }
}

impl TryFrom<GaussianRepr> for Gaussian {
    type Error = Error;

    fn try_from(repr: GaussianRepr) -> Result<Self> {
        let n = repr.mean.len();
        if repr.cov.len() != n || repr.cov.iter().any(|row| row.len() != n) {
            return Err(argument(format!("\"cov\" must be a {n}x{n} nested array")));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| repr.cov[i][j]);
        Gaussian::new(DVector::from_vec(repr.mean), cov)
    }
}
