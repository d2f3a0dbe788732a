use nalgebra::{DMatrix, DVector};

use super::ivp::Ivp;
use super::prior::IwpPrior;
use crate::error::{argument, Result};
use crate::randvars::Gaussian;

/// `k`-th time derivative of the solution through `(y, t)`, `k ≥ 1`, by
/// nested forward differences along the flow.
fn flow_derivative(ivp: &Ivp, y: &DVector<f64>, t: f64, k: usize) -> Result<DVector<f64>> {
    let f = ivp.eval(y, t)?;
    if k == 1 {
        return Ok(f);
    }
    let eps = 1e-6 * (1.0 + y.norm());
    let ahead = flow_derivative(ivp, &(y + &f * eps), t + eps, k - 1)?;
    let here = flow_derivative(ivp, y, t, k - 1)?;
    Ok((ahead - here) / eps)
}

/// Initial belief over the full derivative stack.
///
/// `y` and `y′` are exact (`y₀` and `f(y₀, t₀)`, zero variance). Higher
/// derivatives come from finite differences and get variance `10^(2(k−1))`
/// for the `k`-th. Non-finite estimates fall back to zero mean and unit
/// variance, and a warning is returned alongside the belief.
pub fn taylor_init(ivp: &Ivp, prior: &IwpPrior) -> Result<(Gaussian, Vec<String>)> {
    if prior.dim() != ivp.dim() {
        return Err(argument(format!(
            "prior dimension {} does not match IVP dimension {}",
            prior.dim(),
            ivp.dim()
        )));
    }
    let q = prior.q();
    let n = prior.state_dim();
    let mut mean = DVector::zeros(n);
    let mut std = DVector::zeros(n);
    let mut warnings = Vec::new();

    let y0 = ivp.y0();
    let f0 = ivp.eval(y0, ivp.t0())?;
    for i in 0..ivp.dim() {
        mean[prior.index(i, 0)] = y0[i];
        mean[prior.index(i, 1)] = f0[i];
    }
    for k in 2..=q {
        let estimate = flow_derivative(ivp, y0, ivp.t0(), k)
            .ok()
            .filter(|v| v.iter().all(|x| x.is_finite()));
        let sd = 10f64.powi(k as i32 - 1);
        match estimate {
            Some(v) => {
                for i in 0..ivp.dim() {
                    mean[prior.index(i, k)] = v[i];
                    std[prior.index(i, k)] = sd;
                }
            }
            None => {
                warnings.push(format!(
                    "derivative {k} could not be estimated; using zero mean with unit variance"
                ));
                for i in 0..ivp.dim() {
                    std[prior.index(i, k)] = 1.0;
                }
            }
        }
    }
    let belief = Gaussian::from_factor(mean, DMatrix::from_diagonal(&std))?;
    Ok((belief, warnings))
}
