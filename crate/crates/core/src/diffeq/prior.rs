use nalgebra::{DMatrix, DVector};

use crate::error::{argument, Result};
use crate::filtsmooth::GaussianTransition;

/// `q`-times integrated Wiener process prior over a `dim`-dimensional
/// solution.
///
/// The state stacks `(y, y′, …, y^(q))` per dimension: component `deriv` of
/// dimension `i` sits at index `i·(q+1) + deriv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IwpPrior {
    q: usize,
    dim: usize,
    diffusion: f64,
}

impl IwpPrior {
    pub const MAX_ORDER: usize = 5;

    /// Unit diffusion.
    pub fn new(q: usize, dim: usize) -> Result<Self> {
        if !(1..=Self::MAX_ORDER).contains(&q) {
            return Err(argument(format!(
                "IWP order must be in 1..={}, got {q}",
                Self::MAX_ORDER
            )));
        }
        if dim == 0 {
            return Err(argument("IWP prior needs dimension ≥ 1"));
        }
        Ok(Self { q, dim, diffusion: 1.0 })
    }

    pub fn with_diffusion(mut self, diffusion: f64) -> Result<Self> {
        if !(diffusion > 0.0 && diffusion.is_finite()) {
            return Err(argument(format!("diffusion must be positive, got {diffusion}")));
        }
        self.diffusion = diffusion;
        Ok(self)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn state_dim(&self) -> usize {
        self.dim * (self.q + 1)
    }

    pub fn index(&self, dim: usize, deriv: usize) -> usize {
        dim * (self.q + 1) + deriv
    }

    /// Indices of derivative `deriv` for all dimensions.
    pub fn indices(&self, deriv: usize) -> Vec<usize> {
        (0..self.dim).map(|i| self.index(i, deriv)).collect()
    }

    /// `E_deriv`, the `dim × state_dim` selector of one derivative.
    pub fn projection(&self, deriv: usize) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.dim, self.state_dim());
        for i in 0..self.dim {
            e[(i, self.index(i, deriv))] = 1.0;
        }
        e
    }

    fn lift(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::<f64>::identity(self.dim, self.dim).kronecker(block)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Per-derivative entries of the diagonal coordinate change
/// `T(h)_i = √h·h^(q−i)/(q−i)!`.
fn scaling_block(q: usize, h: f64) -> DVector<f64> {
    DVector::from_fn(q + 1, |i, _| h.sqrt() * h.powi((q - i) as i32) / factorial(q - i))
}

fn unit_blocks(q: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let phi = DMatrix::from_fn(q + 1, q + 1, |i, j| if j >= i { binomial(q - i, j - i) } else { 0.0 });
    let cov = DMatrix::from_fn(q + 1, q + 1, |i, j| 1.0 / (2 * q + 1 - i - j) as f64);
    (phi, cov)
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(argument(format!("step size must be positive and finite, got {h}")));
    }
    Ok(())
}

/// Exact discretization of the IWP prior over a step `h`.
///
/// `Φ(h)ᵢⱼ = h^(j−i)/(j−i)!` and
/// `Q(h)ᵢⱼ = σ²·h^(2q+1−i−j)/((2q+1−i−j)·(q−i)!·(q−j)!)` per dimension. The
/// noise factor is taken from the preconditioned form, `T(h)·chol(Q̄)`, so
/// it stays accurate where `Q(h)` itself is numerically singular.
pub fn iwp_discretize(prior: &IwpPrior, h: f64) -> Result<GaussianTransition> {
    check_step(h)?;
    let q = prior.q;
    let phi = DMatrix::from_fn(q + 1, q + 1, |i, j| {
        if j >= i {
            h.powi((j - i) as i32) / factorial(j - i)
        } else {
            0.0
        }
    });
    let cov = DMatrix::from_fn(q + 1, q + 1, |i, j| {
        let p = 2 * q + 1 - i - j;
        prior.diffusion * h.powi(p as i32) / (p as f64 * factorial(q - i) * factorial(q - j))
    });
    let (_, unit_cov) = unit_blocks(q);
    let unit_factor = unit_cov.cholesky().expect("Q̄ is positive definite").l();
    let factor = DMatrix::from_diagonal(&scaling_block(q, h)) * unit_factor * prior.diffusion.sqrt();
    Ok(GaussianTransition::from_parts(
        prior.lift(&phi),
        prior.lift(&cov),
        prior.lift(&factor),
    ))
}

/// Step-independent form of the IWP transition.
#[derive(Debug, Clone)]
pub struct Preconditioned {
    /// Diagonal of `T(h)`, over the full state.
    pub scaling: DVector<f64>,
    /// `(Φ̄, Q̄)` with `Φ(h) = T·Φ̄·T⁻¹` and `Q(h) = T·Q̄·Tᵀ`.
    pub transition: GaussianTransition,
}

impl Preconditioned {
    /// `T⁻¹` applied entrywise.
    pub fn inverse_scaling(&self) -> DVector<f64> {
        self.scaling.map(|v| 1.0 / v)
    }
}

/// Coordinate change `T(h)` and constant transition pair `(Φ̄, Q̄)`.
///
/// `Φ̄ᵢⱼ = C(q−i, j−i)` and `Q̄ᵢⱼ = σ²/(2q+1−i−j)`, independent of `h`.
pub fn precondition(prior: &IwpPrior, h: f64) -> Result<Preconditioned> {
    check_step(h)?;
    let q = prior.q;
    let (phi, cov) = unit_blocks(q);
    let factor = cov.clone().cholesky().expect("Q̄ is positive definite").l() * prior.diffusion.sqrt();
    let block = scaling_block(q, h);
    let scaling = DVector::from_fn(prior.state_dim(), |k, _| block[k % (q + 1)]);
    Ok(Preconditioned {
        scaling,
        transition: GaussianTransition::from_parts(
            prior.lift(&phi),
            prior.lift(&cov) * prior.diffusion,
            prior.lift(&factor),
        ),
    })
}
