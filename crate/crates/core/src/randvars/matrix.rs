use nalgebra::DMatrix;

use crate::dense;
use crate::error::{argument, Result};
use crate::linops::LinOp;

/// Gaussian belief over an `n×n` matrix with symmetric-Kronecker covariance
/// `W ⊗ₛ W`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGaussian {
    mean: DMatrix<f64>,
    factor: DMatrix<f64>,
    symmetric: bool,
}

impl MatrixGaussian {
    /// Prior belief: `factor` must be symmetric positive definite, and a
    /// symmetric model needs a symmetric mean.
    pub fn new(mean: DMatrix<f64>, factor: DMatrix<f64>, symmetric: bool) -> Result<Self> {
        let n = mean.nrows();
        if !mean.is_square() || factor.shape() != (n, n) {
            return Err(argument(format!(
                "matrix belief needs square mean and factor of equal size, got {:?} and {:?}",
                mean.shape(),
                factor.shape()
            )));
        }
        if symmetric && (&mean - mean.transpose()).amax() > 1e-12 * (1.0 + mean.amax()) {
            return Err(argument("asymmetric mean for a symmetric matrix model"));
        }
        if (&factor - factor.transpose()).amax() > 1e-12 * (1.0 + factor.amax()) {
            return Err(argument("Kronecker factor W must be symmetric"));
        }
        if dense::strict_cholesky(&factor).is_none() {
            return Err(argument("Kronecker factor W must be positive definite"));
        }
        Ok(Self {
            mean,
            factor: dense::symmetrize(&factor),
            symmetric,
        })
    }

    /// Posterior beliefs may carry a rank-deficient factor.
    pub(crate) fn posterior(mean: DMatrix<f64>, factor: DMatrix<f64>, symmetric: bool) -> Self {
        Self {
            mean,
            factor: dense::symmetrize(&factor),
            symmetric,
        }
    }

    pub fn size(&self) -> usize {
        self.mean.nrows()
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    /// The Kronecker factor `W`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Covariance over the column-major vectorization, as an operator.
    pub fn cov(&self) -> LinOp {
        LinOp::symmetric_kronecker(LinOp::dense(self.factor.clone())).expect("factor is square by construction")
    }
}
