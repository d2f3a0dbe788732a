//! Matrix-free linear operators.
//!
//! An operator only needs to know its shape and how to act on a vector (and,
//! for the adjoint, on a vector from the codomain). Dense matrices, identities,
//! scalings and Kronecker products are provided, and [`LinOp`] combines them
//! lazily through addition, composition, scaling and transposition.
//!
//! Vectorization of matrices is column-major throughout: `vec(X)` stacks the
//! columns of `X`. With that convention `(L ⊗ R)·vec(X) = vec(R·X·Lᵀ)`.

use std::fmt;
use std::ops::{Deref, Mul, Neg};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{argument, Error, Result};

/// Default cap on the number of entries [`LinOp::to_dense`] will materialize.
pub const DEFAULT_DENSE_CAP: usize = 1_000_000;

/// The action of a linear map `A: ℝᶜᵒˡˢ → ℝʳᵒʷˢ`.
///
/// `matvec` and `rmatvec` may assume correctly sized inputs; shape checking
/// happens in [`LinOp::apply`] and [`LinOp::adjoint_apply`]. Implementations
/// must be reentrant.
pub trait LinearOperator: fmt::Debug + Send + Sync {
    fn shape(&self) -> (usize, usize);

    /// `A·v`
    fn matvec(&self, v: &DVector<f64>) -> DVector<f64>;

    /// `Aᵀ·w`
    fn rmatvec(&self, w: &DVector<f64>) -> DVector<f64>;

    fn is_symmetric(&self) -> bool {
        false
    }

    fn is_positive_definite(&self) -> bool {
        false
    }
}

/// Shared handle to a linear operator.
#[derive(Clone)]
pub struct LinOp(Arc<dyn LinearOperator>);

impl fmt::Debug for LinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Deref for LinOp {
    type Target = dyn LinearOperator;

    fn deref(&self) -> &Self::Target {
        self.0.as_ref()
    }
}

impl LinOp {
    pub fn new(op: impl LinearOperator + 'static) -> Self {
        Self(Arc::new(op))
    }

    pub fn dense(matrix: DMatrix<f64>) -> Self {
        Self::new(Dense::new(matrix))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(Identity { n })
    }

    pub fn scaling(n: usize, alpha: f64) -> Self {
        Self::new(Scaling { n, alpha })
    }

    pub fn kronecker(left: LinOp, right: LinOp) -> Self {
        Self::new(Kronecker::new(left, right))
    }

    /// `W ⊗ₛ W` for a square `W`.
    pub fn symmetric_kronecker(w: LinOp) -> Result<Self> {
        Ok(Self::new(SymmetricKronecker::new(w)?))
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let (rows, cols) = self.shape();
        if v.len() != cols {
            return Err(argument(format!(
                "operator of shape {rows}x{cols} applied to vector of length {}",
                v.len()
            )));
        }
        Ok(self.matvec(v))
    }

    pub fn adjoint_apply(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let (rows, cols) = self.shape();
        if w.len() != rows {
            return Err(argument(format!(
                "adjoint of operator of shape {rows}x{cols} applied to vector of length {}",
                w.len()
            )));
        }
        Ok(self.rmatvec(w))
    }

    /// Applies the operator to every column of `m`.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (rows, cols) = self.shape();
        if m.nrows() != cols {
            return Err(argument(format!(
                "operator of shape {rows}x{cols} applied to matrix with {} rows",
                m.nrows()
            )));
        }
        let mut out = DMatrix::zeros(rows, m.ncols());
        for (j, col) in m.column_iter().enumerate() {
            out.set_column(j, &self.matvec(&col.into_owned()));
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        self.to_dense_with_cap(DEFAULT_DENSE_CAP)
    }

    pub fn to_dense_with_cap(&self, cap: usize) -> Result<DMatrix<f64>> {
        let (rows, cols) = self.shape();
        if rows.saturating_mul(cols) > cap {
            return Err(Error::Resource(format!(
                "dense materialization of a {rows}x{cols} operator exceeds the cap of {cap} entries"
            )));
        }
        let mut out = DMatrix::zeros(rows, cols);
        let mut e = DVector::zeros(cols);
        for j in 0..cols {
            e[j] = 1.0;
            out.set_column(j, &self.matvec(&e));
            e[j] = 0.0;
        }
        Ok(out)
    }

    pub fn transpose(&self) -> LinOp {
        LinOp::new(Transposed(self.clone()))
    }

    /// `self ∘ inner`, i.e. `v ↦ self·(inner·v)`.
    pub fn compose(&self, inner: &LinOp) -> Result<LinOp> {
        if self.cols() != inner.rows() {
            return Err(argument(format!(
                "cannot compose {:?} with {:?}",
                self.shape(),
                inner.shape()
            )));
        }
        Ok(LinOp::new(Product(self.clone(), inner.clone())))
    }

    pub fn add(&self, other: &LinOp) -> Result<LinOp> {
        if self.shape() != other.shape() {
            return Err(argument(format!(
                "cannot add operators of shapes {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(LinOp::new(Sum(self.clone(), other.clone())))
    }

    pub fn scale(&self, alpha: f64) -> LinOp {
        LinOp::new(Scaled(self.clone(), alpha))
    }
}

impl Mul<f64> for LinOp {
    type Output = LinOp;

    fn mul(self, alpha: f64) -> LinOp {
        self.scale(alpha)
    }
}

impl Neg for LinOp {
    type Output = LinOp;

    fn neg(self) -> LinOp {
        self.scale(-1.0)
    }
}

impl From<DMatrix<f64>> for LinOp {
    fn from(m: DMatrix<f64>) -> Self {
        LinOp::dense(m)
    }
}

/// A dense matrix viewed as an operator.
#[derive(Debug, Clone)]
pub struct Dense {
    matrix: DMatrix<f64>,
    symmetric: bool,
    positive_definite: bool,
}

impl Dense {
    /// Symmetry is detected exactly; positive definiteness must be declared.
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let symmetric = matrix.is_square() && matrix == matrix.transpose();
        Self {
            matrix,
            symmetric,
            positive_definite: false,
        }
    }

    pub fn positive_definite(mut self) -> Self {
        self.positive_definite = true;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for Dense {
    fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    fn rmatvec(&self, w: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(w)
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn is_positive_definite(&self) -> bool {
        self.positive_definite
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub n: usize,
}

impl LinearOperator for Identity {
    fn shape(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }

    fn rmatvec(&self, w: &DVector<f64>) -> DVector<f64> {
        w.clone()
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn is_positive_definite(&self) -> bool {
        true
    }
}

/// `α·I`
#[derive(Debug, Clone, Copy)]
pub struct Scaling {
    pub n: usize,
    pub alpha: f64,
}

impl LinearOperator for Scaling {
    fn shape(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        v * self.alpha
    }

    fn rmatvec(&self, w: &DVector<f64>) -> DVector<f64> {
        w * self.alpha
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn is_positive_definite(&self) -> bool {
        self.alpha > 0.0
    }
}

/// `left ⊗ right` acting on column-major vectorized matrices.
#[derive(Debug, Clone)]
pub struct Kronecker {
    left: LinOp,
    right: LinOp,
}

impl Kronecker {
    pub fn new(left: LinOp, right: LinOp) -> Self {
        Self { left, right }
    }

    pub fn left(&self) -> &LinOp {
        &self.left
    }

    pub fn right(&self) -> &LinOp {
        &self.right
    }

    /// `(L ⊗ R)·vec(X) = vec(R·X·Lᵀ)`, checked.
    pub fn kron_apply(&self, vec_x: &DVector<f64>) -> Result<DVector<f64>> {
        let cols = self.shape().1;
        if vec_x.len() != cols {
            return Err(argument(format!(
                "Kronecker operator with {cols} columns applied to vector of length {}",
                vec_x.len()
            )));
        }
        Ok(kron_action(&self.left, &self.right, vec_x, false))
    }
}

/// Computes `vec(R·X·Lᵀ)` (or the transposed action) using only operator applications.
fn kron_action(left: &LinOp, right: &LinOp, vec_x: &DVector<f64>, adjoint: bool) -> DVector<f64> {
    let act = |op: &LinOp, v: &DVector<f64>| {
        if adjoint {
            op.rmatvec(v)
        } else {
            op.matvec(v)
        }
    };
    let (l_out, l_in) = if adjoint {
        (left.cols(), left.rows())
    } else {
        left.shape()
    };
    let (r_out, r_in) = if adjoint {
        (right.cols(), right.rows())
    } else {
        right.shape()
    };
    let x = DMatrix::from_column_slice(r_in, l_in, vec_x.as_slice());
    let mut rx = DMatrix::zeros(r_out, l_in);
    for j in 0..l_in {
        rx.set_column(j, &act(right, &x.column(j).into_owned()));
    }
    let mut y = DMatrix::zeros(r_out, l_out);
    for i in 0..r_out {
        let row = rx.row(i).transpose();
        y.set_row(i, &act(left, &row).transpose());
    }
    DVector::from_column_slice(y.as_slice())
}

impl LinearOperator for Kronecker {
    fn shape(&self) -> (usize, usize) {
        let (p, q) = self.left.shape();
        let (r, s) = self.right.shape();
        (p * r, q * s)
    }

    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        kron_action(&self.left, &self.right, v, false)
    }

    fn rmatvec(&self, w: &DVector<f64>) -> DVector<f64> {
        kron_action(&self.left, &self.right, w, true)
    }

    fn is_symmetric(&self) -> bool {
        self.left.is_symmetric() && self.right.is_symmetric()
    }

    fn is_positive_definite(&self) -> bool {
        self.left.is_positive_definite() && self.right.is_positive_definite()
    }
}

/// Symmetric Kronecker product `W ⊗ₛ W`: `vec(X) ↦ vec(½·W·(X + Xᵀ)·Wᵀ)`.
#[derive(Debug, Clone)]
pub struct SymmetricKronecker {
    w: LinOp,
}

impl SymmetricKronecker {
    pub fn new(w: LinOp) -> Result<Self> {
        let (r, c) = w.shape();
        if r != c {
            return Err(argument(format!(
                "symmetric Kronecker factor must be square, got {r}x{c}"
            )));
        }
        Ok(Self { w })
    }

    pub fn factor(&self) -> &LinOp {
        &self.w
    }

    fn action(&self, v: &DVector<f64>, adjoint: bool) -> DVector<f64> {
        let n = self.w.rows();
        let x = DMatrix::from_column_slice(n, n, v.as_slice());
        let sym = (&x + x.transpose()) * 0.5;
        let apply = |u: &DVector<f64>| {
            if adjoint {
                self.w.rmatvec(u)
            } else {
                self.w.matvec(u)
            }
        };
        let mut wx = DMatrix::zeros(n, n);
        for j in 0..n {
            wx.set_column(j, &apply(&sym.column(j).into_owned()));
        }
        let mut y = DMatrix::zeros(n, n);
        for i in 0..n {
            y.set_row(i, &apply(&wx.row(i).transpose()).transpose());
        }
        DVector::from_column_slice(y.as_slice())
    }
}

impl LinearOperator for SymmetricKronecker {
    fn shape(&self) -> (usize, usize) {
        let n = self.w.rows();
        (n * n, n * n)
    }

    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.action(v, false)
    }

    fn rmatvec(&self, w: &DVector<f64>) -> DVector<f64> {
        self.action(w, true)
    }

    fn is_symmetric(&self) -> bool {
        self.w.is_symmetric()
    }
}

#[derive(Debug)]
struct Transposed(LinOp);

impl LinearOperator for Transposed {
    fn shape(&self) -> (usize, usize) {
        let (r, c) = self.0.shape();
        (c, r)
    }

    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.0.rmatvec(v)
    }

    fn rmatvec(&self, w: &DVector<f64>) -> DVector<f64> {
        self.0.matvec(w)
    }

    fn is_symmetric(&self) -> bool {
        self.0.is_symmetric()
    }

    fn is_positive_definite(&self) -> bool {
        self.0.is_positive_definite()
    }
}

#[derive(Debug)]
struct Product(LinOp, LinOp);

impl LinearOperator for Product {
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.1.cols())
    }

    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.0.matvec(&self.1.matvec(v))
    }

    fn rmatvec(&self, w: &DVector<f64>) -> DVector<f64> {
        self.1.rmatvec(&self.0.rmatvec(w))
    }
}

#[derive(Debug)]
struct Sum(LinOp, LinOp);

impl LinearOperator for Sum {
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.0.matvec(v) + self.1.matvec(v)
    }

    fn rmatvec(&self, w: &DVector<f64>) -> DVector<f64> {
        self.0.rmatvec(w) + self.1.rmatvec(w)
    }

    fn is_symmetric(&self) -> bool {
        self.0.is_symmetric() && self.1.is_symmetric()
    }

    fn is_positive_definite(&self) -> bool {
        self.0.is_positive_definite() && self.1.is_positive_definite()
    }
}

#[derive(Debug)]
struct Scaled(LinOp, f64);

impl LinearOperator for Scaled {
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.0.matvec(v) * self.1
    }

    fn rmatvec(&self, w: &DVector<f64>) -> DVector<f64> {
        self.0.rmatvec(w) * self.1
    }

    fn is_symmetric(&self) -> bool {
        self.0.is_symmetric()
    }

    fn is_positive_definite(&self) -> bool {
        self.1 > 0.0 && self.0.is_positive_definite()
    }
}
