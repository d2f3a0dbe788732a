//! Small dense-matrix kernels shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{numerical, Result};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_diag(m: &DMatrix<f64>) -> f64 {
    m.diagonal().iter().fold(0.0_f64, |acc, &d| acc.max(d))
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Absolute tolerance on `‖L·Lᵀ − A‖_max` accepted for a factor of `A`.
pub fn factor_tolerance(a: &DMatrix<f64>) -> f64 {
    1e-10 * (1.0 + a.amax())
}

/// Cholesky that tolerates zero pivots.
///
/// Pivots at or below `tol` are treated as exact zeros and their column is
/// cleared, which is exact for positive-semidefinite input.
fn semidefinite_cholesky(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= tol {
            continue;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    l
}

fn with_jitter(a: &DMatrix<f64>, jitter: f64) -> DMatrix<f64> {
    let mut out = a.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += jitter;
    }
    out
}

/// Lower-triangular `L` with `L·Lᵀ ≈ A` for a symmetric PSD `A`.
///
/// Tries, in order: a plain Cholesky; a zero-pivot-tolerant Cholesky accepted
/// only if it reproduces `A` to [`factor_tolerance`]; Cholesky with diagonal
/// jitter `1e-12·max_diag`, then `1e-8·max_diag`.
pub fn psd_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !is_finite(a) {
        return Err(numerical("cannot factor a covariance with non-finite entries"));
    }
    if a.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(n, n));
    }
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(chol.l());
    }
    let scale = max_diag(a);
    if scale <= 0.0 {
        return Err(numerical(
            "covariance has zero diagonal but nonzero off-diagonal entries",
        ));
    }
    let l = semidefinite_cholesky(a, 1e-14 * scale * n as f64);
    if (&l * l.transpose() - a).amax() <= factor_tolerance(a) {
        return Ok(l);
    }
    for rel in [1e-12, 1e-8] {
        if let Some(chol) = Cholesky::new(with_jitter(a, rel * scale)) {
            return Ok(chol.l());
        }
    }
    Err(numerical(
        "covariance factorization failed after jitter escalation (matrix is indefinite)",
    ))
}

/// Lower-triangular `L` (nonnegative diagonal) with `L·Lᵀ = M·Mᵀ`.
///
/// Computed from the QR decomposition of `Mᵀ`, so no product `M·Mᵀ` is ever
/// formed.
pub fn tria(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let k = m.ncols();
    let mt = if k >= n {
        m.transpose()
    } else {
        let mut padded = DMatrix::zeros(n, n);
        padded.columns_mut(0, k).copy_from(m);
        padded.transpose()
    };
    let r = mt.qr().r();
    let mut l = r.transpose();
    for j in 0..n {
        if l[(j, j)] < 0.0 {
            for i in j..n {
                l[(i, j)] = -l[(i, j)];
            }
        }
    }
    l
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        out.columns_mut(offset, b.ncols()).copy_from(*b);
        offset += b.ncols();
    }
    out
}

/// Solves `P·X = B` for symmetric PSD `P`.
///
/// Uses the jitter ladder of [`psd_factor`] on a plain Cholesky first and
/// falls back to an SVD pseudo-inverse when `P` is rank deficient.
pub fn solve_psd(p: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_finite(p) || !is_finite(b) {
        return Err(numerical("non-finite entries in linear solve"));
    }
    if let Some(chol) = Cholesky::new(p.clone()) {
        return Ok(chol.solve(b));
    }
    let scale = max_diag(p);
    if scale > 0.0 {
        for rel in [1e-12, 1e-8] {
            if let Some(chol) = Cholesky::new(with_jitter(p, rel * scale)) {
                return Ok(chol.solve(b));
            }
        }
    }
    let pinv = p
        .clone()
        .pseudo_inverse(1e-14 * scale.max(f64::MIN_POSITIVE))
        .map_err(|e| numerical(format!("pseudo-inverse failed: {e}")))?;
    Ok(pinv * b)
}

/// Solves `L·x = b` for lower-triangular `L`, failing on zero pivots.
pub fn lower_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    l.solve_lower_triangular(b)
        .ok_or_else(|| numerical("singular triangular factor"))
}

/// Solves `Lᵀ·x = b` for lower-triangular `L`.
pub fn lower_transpose_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    l.tr_solve_lower_triangular(b)
        .ok_or_else(|| numerical("singular triangular factor"))
}

/// Cholesky of a matrix expected to be SPD, with no jitter.
pub fn strict_cholesky(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone())
}

pub fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_of_rank_deficient_matrix_is_exact() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let l = psd_factor(&a).unwrap();
        assert!((&l * l.transpose() - &a).amax() <= 1e-14);
        assert_eq!(l[(1, 1)], 0.0);
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn factor_of_zero_matrix_is_zero() {
        let l = psd_factor(&DMatrix::zeros(4, 4)).unwrap();
        assert_eq!(l, DMatrix::zeros(4, 4));
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(psd_factor(&a).is_err());
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(psd_factor(&b).is_err());
    }

    #[test]
    fn tria_reproduces_gram_matrix() {
        let m = DMatrix::from_row_slice(
            3,
            5,
            &[
                1.0, 2.0, 0.5, -1.0, 0.0, //
                0.0, 1.0, 3.0, 0.0, 1.0, //
                2.0, -1.0, 0.0, 1.0, 1.0,
            ],
        );
        let l = tria(&m);
        assert!((&l * l.transpose() - &m * m.transpose()).amax() <= 1e-12);
        for j in 0..3 {
            assert!(l[(j, j)] >= 0.0);
        }
        let narrow = m.columns(0, 2).into_owned();
        let l = tria(&narrow);
        assert!((&l * l.transpose() - &narrow * narrow.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn psd_solve_handles_singular_systems() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[2.0, 0.0]);
        let x = solve_psd(&p, &b).unwrap();
        assert!((x[(0, 0)] - 2.0).abs() <= 1e-6);
        let zero = solve_psd(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 1)).unwrap();
        assert_eq!(zero, DMatrix::zeros(2, 1));
    }
}
