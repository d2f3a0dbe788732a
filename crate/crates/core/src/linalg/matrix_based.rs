use nalgebra::{DMatrix, DVector};

use crate::dense::symmetrize;
use crate::error::{argument, numerical, Result};
use crate::randvars::MatrixGaussian;

/// Conditions a belief `N(H₀, W ⊗ₛ W)` over `H ≈ A⁻¹` on `H·Y = S`.
///
/// With `Δ = S − H₀·Y` and `G = YᵀW·Y`, the symmetric posterior mean is
///
/// `H₀ + Δ·G⁻¹·YᵀW + W·Y·G⁻¹·Δᵀ − W·Y·G⁻¹·YᵀΔ·G⁻¹·YᵀW`
///
/// and the factor becomes `W − W·Y·G⁻¹·YᵀW`. For a non-symmetric belief
/// (covariance `W ⊗ W`) only the first correction term is kept.
pub fn matrix_based_update(belief: &MatrixGaussian, s: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<MatrixGaussian> {
    let n = belief.size();
    if s.nrows() != n || y.shape() != s.shape() || s.ncols() == 0 {
        return Err(argument(format!(
            "directions {:?} and observations {:?} must both be {n}×k with k ≥ 1",
            s.shape(),
            y.shape()
        )));
    }
    let h0 = belief.mean();
    if belief.is_symmetric() && (h0 - h0.transpose()).amax() > 1e-12 * (1.0 + h0.amax()) {
        return Err(argument("asymmetric prior mean for a symmetric matrix model"));
    }
    let w = belief.factor();
    // H·Y = S is invariant under column scaling; equilibrate so that the rank
    // test does not confuse short directions with dependent ones.
    let norms = DVector::from_iterator(y.ncols(), y.column_iter().map(|c| (c.transpose() * w * c)[0].sqrt()));
    if norms.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(numerical("observation with zero W-norm in matrix-based update"));
    }
    let scaling = DMatrix::from_diagonal(&norms.map(|v| 1.0 / v));
    let s = s * &scaling;
    let y = y * &scaling;
    let wy = w * &y;
    let gram = symmetrize(&(y.transpose() * &wy));
    let eig = gram.clone().symmetric_eigenvalues();
    let max_eig = eig.max();
    if !(eig.min() > 1e-14 * max_eig) {
        return Err(numerical(format!(
            "YᵀW·Y is rank deficient (eigenvalues in [{:e}, {max_eig:e}])",
            eig.min()
        )));
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| numerical("YᵀW·Y is not positive definite"))?;
    let delta = &s - h0 * &y;
    // G⁻¹·(W·Y)ᵀ
    let gw = chol.solve(&wy.transpose());
    let mean = if belief.is_symmetric() {
        let inner = chol.solve(&(y.transpose() * &delta));
        let m = h0 + &delta * &gw + gw.transpose() * delta.transpose() - &wy * inner * &gw;
        symmetrize(&m)
    } else {
        h0 + &delta * &gw
    };
    // Joseph form (I − W·Y·G⁻¹·Yᵀ)·W·(…)ᵀ keeps the factor PSD under roundoff
    let n = w.nrows();
    let projector = DMatrix::identity(n, n) - &wy * chol.solve(&y.transpose());
    let factor = symmetrize(&(&projector * w * projector.transpose()));
    Ok(MatrixGaussian::posterior(mean, factor, belief.is_symmetric()))
}
