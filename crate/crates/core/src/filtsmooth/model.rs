use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::dense;
use crate::error::{argument, Result};
use crate::randvars::Gaussian;

/// `x' = Φ·x + b + w`, `w ~ N(0, Q)`.
#[derive(Debug, Clone)]
pub struct GaussianTransition {
    phi: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    drift: DVector<f64>,
    noise_factor: OnceLock<DMatrix<f64>>,
}

impl GaussianTransition {
    pub fn new(phi: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Result<Self> {
        let n = phi.nrows();
        if !phi.is_square() || noise_cov.shape() != (n, n) {
            return Err(argument(format!(
                "transition needs square Φ and Q of equal size, got {:?} and {:?}",
                phi.shape(),
                noise_cov.shape()
            )));
        }
        if !dense::is_finite(&phi) || !dense::is_finite(&noise_cov) {
            return Err(argument("transition matrices must be finite"));
        }
        // validates symmetry and semidefiniteness of Q
        let q = Gaussian::new(DVector::zeros(n), noise_cov)?;
        Ok(Self {
            phi,
            noise_cov: q.cov().clone(),
            drift: DVector::zeros(n),
            noise_factor: OnceLock::new(),
        })
    }

    /// Transition whose process noise is given through a factor `L_Q`
    /// (`Q = L_Q·L_Qᵀ`). The factor is used verbatim by the square-root recursion.
    pub fn from_noise_factor(phi: DMatrix<f64>, noise_factor: DMatrix<f64>) -> Result<Self> {
        let n = phi.nrows();
        if !phi.is_square() || noise_factor.nrows() != n {
            return Err(argument(format!(
                "transition needs square Φ and a noise factor with {n} rows, got {:?} and {:?}",
                phi.shape(),
                noise_factor.shape()
            )));
        }
        let q = Gaussian::from_factor(DVector::zeros(n), noise_factor)?;
        let factor = q.cov_factor()?.clone();
        let cell = OnceLock::new();
        let _ = cell.set(factor);
        Ok(Self {
            phi,
            noise_cov: q.cov().clone(),
            drift: DVector::zeros(n),
            noise_factor: cell,
        })
    }

    /// Both `Q` and a factor of it, trusted to agree.
    pub(crate) fn from_parts(phi: DMatrix<f64>, noise_cov: DMatrix<f64>, noise_factor: DMatrix<f64>) -> Self {
        let n = phi.nrows();
        let cell = OnceLock::new();
        let _ = cell.set(noise_factor);
        Self {
            phi,
            noise_cov,
            drift: DVector::zeros(n),
            noise_factor: cell,
        }
    }

    pub fn with_drift(mut self, drift: DVector<f64>) -> Result<Self> {
        if drift.len() != self.dim() {
            return Err(argument(format!(
                "drift of length {} for transition of dimension {}",
                drift.len(),
                self.dim()
            )));
        }
        self.drift = drift;
        Ok(self)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_noise_factor(DMatrix::identity(n, n), DMatrix::zeros(n, n)).expect("identity transition is valid")
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.drift
    }

    /// Lower-triangular factor of `Q`.
    pub fn noise_factor(&self) -> Result<&DMatrix<f64>> {
        if let Some(l) = self.noise_factor.get() {
            return Ok(l);
        }
        let l = dense::psd_factor(&self.noise_cov)?;
        Ok(self.noise_factor.get_or_init(|| l))
    }

    pub(crate) fn check_state(&self, state: &Gaussian) -> Result<()> {
        if state.dim() != self.dim() {
            return Err(argument(format!(
                "state of dimension {} for transition of dimension {}",
                state.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// `y = H·x + c + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone)]
pub struct LinearObservationModel {
    h: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    offset: DVector<f64>,
}

impl LinearObservationModel {
    pub fn new(h: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Result<Self> {
        let m = h.nrows();
        if noise_cov.shape() != (m, m) {
            return Err(argument(format!(
                "observation noise of shape {:?} for {m} observed components",
                noise_cov.shape()
            )));
        }
        if !dense::is_finite(&h) {
            return Err(argument("observation matrix must be finite"));
        }
        let r = if m == 0 {
            noise_cov
        } else {
            Gaussian::new(DVector::zeros(m), noise_cov)?.cov().clone()
        };
        Ok(Self {
            h,
            noise_cov: r,
            offset: DVector::zeros(m),
        })
    }

    /// Noise-free observation `y = H·x + c`.
    pub fn exact(h: DMatrix<f64>) -> Self {
        let m = h.nrows();
        Self {
            h,
            noise_cov: DMatrix::zeros(m, m),
            offset: DVector::zeros(m),
        }
    }

    pub fn with_offset(mut self, offset: DVector<f64>) -> Result<Self> {
        if offset.len() != self.h.nrows() {
            return Err(argument(format!(
                "offset of length {} for {} observed components",
                offset.len(),
                self.h.nrows()
            )));
        }
        if offset.iter().any(|v| !v.is_finite()) {
            return Err(argument("observation offset must be finite"));
        }
        self.offset = offset;
        Ok(self)
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub(crate) fn check(&self, state: &Gaussian, y: &DVector<f64>) -> Result<()> {
        if self.h.ncols() != state.dim() || y.len() != self.obs_dim() {
            return Err(argument(format!(
                "observation model {:?} with data of length {} for state of dimension {}",
                self.h.shape(),
                y.len(),
                state.dim()
            )));
        }
        Ok(())
    }
}

/// Residual `z = y − H·m − c` and its covariance `S = H·P·Hᵀ + R`.
#[derive(Debug, Clone)]
pub struct Innovation {
    pub residual: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// One step of a filtering problem: move to `time` through `transition`,
/// then (optionally) condition on an observation.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub time: f64,
    pub transition: GaussianTransition,
    pub observation: Option<(LinearObservationModel, DVector<f64>)>,
}

/// Output of a forward filtering pass, with everything smoothing needs.
///
/// `predicted[k]`, `transitions[k-1]` and `innovations[k]` refer to the step
/// that arrived at `times[k]`; index 0 holds the initial belief only.
#[derive(Debug, Clone)]
pub struct FilterTrajectory {
    pub times: Vec<f64>,
    pub filtered: Vec<Gaussian>,
    pub predicted: Vec<Option<Gaussian>>,
    pub transitions: Vec<GaussianTransition>,
    pub innovations: Vec<Option<Innovation>>,
}

impl FilterTrajectory {
    pub(crate) fn start(t0: f64, initial: Gaussian) -> Self {
        Self {
            times: vec![t0],
            filtered: vec![initial],
            predicted: vec![None],
            transitions: Vec::new(),
            innovations: vec![None],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        let last = *self.times.last().expect("trajectory is never empty");
        if !(t > last) {
            return Err(argument(format!(
                "filter times must be strictly increasing ({t} after {last})"
            )));
        }
        Ok(())
    }

    pub(crate) fn check_complete(&self) -> Result<()> {
        let n = self.times.len();
        if n == 0
            || self.filtered.len() != n
            || self.predicted.len() != n
            || self.transitions.len() + 1 != n
            || self.predicted.iter().skip(1).any(Option::is_none)
        {
            return Err(argument("filter trajectory is incomplete or inconsistent"));
        }
        Ok(())
    }
}
