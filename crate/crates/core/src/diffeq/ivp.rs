use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{argument, numerical, Result};

pub type VectorField = Arc<dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync>;
pub type Jacobian = Arc<dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync>;

/// `ẏ(t) = f(y(t), t)`, `y(t₀) = y₀`, on `[t₀, t_max]`.
#[derive(Clone)]
pub struct Ivp {
    f: VectorField,
    jacobian: Option<Jacobian>,
    t0: f64,
    tmax: f64,
    y0: DVector<f64>,
}

impl fmt::Debug for Ivp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ivp")
            .field("t0", &self.t0)
            .field("tmax", &self.tmax)
            .field("y0", &self.y0)
            .field("jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl Ivp {
    pub fn new(
        f: impl Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
        t0: f64,
        tmax: f64,
        y0: DVector<f64>,
    ) -> Result<Self> {
        if !(t0.is_finite() && tmax.is_finite() && tmax > t0) {
            return Err(argument(format!("need finite t0 < tmax, got [{t0}, {tmax}]")));
        }
        if y0.is_empty() || y0.iter().any(|v| !v.is_finite()) {
            return Err(argument("initial value must be a nonempty finite vector"));
        }
        let ivp = Self {
            f: Arc::new(f),
            jacobian: None,
            t0,
            tmax,
            y0,
        };
        ivp.eval(&ivp.y0, t0)?;
        Ok(ivp)
    }

    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tmax(&self) -> f64 {
        self.tmax
    }

    pub fn y0(&self) -> &DVector<f64> {
        &self.y0
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// `f(y, t)`, failing on a wrong output length or non-finite values.
    pub fn eval(&self, y: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let out = (self.f)(y, t);
        if out.len() != self.dim() {
            return Err(argument(format!(
                "vector field returned length {} for dimension {}",
                out.len(),
                self.dim()
            )));
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(numerical(format!("non-finite vector field value at t = {t}")));
        }
        Ok(out)
    }

    /// Jacobian of `f` in `y`: the supplied one, or central differences with
    /// step `1e-6·(1 + ‖y‖)`.
    pub fn jacobian(&self, y: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let jac = match &self.jacobian {
            Some(j) => j(y, t),
            None => {
                let eps = 1e-6 * (1.0 + y.norm());
                let mut jac = DMatrix::zeros(d, d);
                for j in 0..d {
                    let mut plus = y.clone();
                    let mut minus = y.clone();
                    plus[j] += eps;
                    minus[j] -= eps;
                    let col = (self.eval(&plus, t)? - self.eval(&minus, t)?) / (2.0 * eps);
                    jac.set_column(j, &col);
                }
                jac
            }
        };
        if jac.shape() != (d, d) {
            return Err(argument(format!(
                "Jacobian has shape {:?}, expected ({d}, {d})",
                jac.shape()
            )));
        }
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(numerical(format!("non-finite Jacobian at t = {t}")));
        }
        Ok(jac)
    }
}
