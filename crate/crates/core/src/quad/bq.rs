use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use super::kernel::SquaredExpKernel;
use super::measure::{Measure, QuadProblem};
use crate::error::{argument, numerical, Result};
use crate::randvars::Gaussian;

/// Diagonal jitter levels, relative to the output scale.
const JITTER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Gaussian-process posterior over an integrand, summarized by the quantities
/// Bayesian quadrature needs.
#[derive(Debug, Clone)]
pub struct BqState {
    pub kernel: SquaredExpKernel,
    pub measure: Measure,
    /// One node per row.
    pub nodes: DMatrix<f64>,
    pub values: DVector<f64>,
    /// Kernel means `z_i = ∫ k(x_i, x) dμ(x)`.
    pub kernel_means: DVector<f64>,
    /// `c = ∬ k dμ dμ`.
    pub initial_error: f64,
    /// `w = K⁻¹·z`.
    pub weights: DVector<f64>,
    /// Jitter actually added to the Gram diagonal.
    pub jitter: f64,
    factor: Option<Cholesky<f64, Dyn>>,
}

impl BqState {
    /// Conditions the kernel's Gaussian process on `values` at `nodes`.
    pub fn fit(
        measure: &Measure,
        kernel: &SquaredExpKernel,
        nodes: DMatrix<f64>,
        values: DVector<f64>,
    ) -> Result<Self> {
        let c = kernel.initial_error(measure)?;
        let k = nodes.nrows();
        if k > 0 && nodes.ncols() != measure.dim() {
            return Err(argument(format!(
                "nodes have {} columns for a {}-dimensional measure",
                nodes.ncols(),
                measure.dim()
            )));
        }
        if values.len() != k {
            return Err(argument(format!("{} values for {k} nodes", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(argument("integrand values must be finite"));
        }
        for (i, row) in nodes.row_iter().enumerate() {
            let x: Vec<f64> = row.iter().copied().collect();
            if !measure.contains(&x) {
                return Err(argument(format!(
                    "node {i} at {x:?} lies outside the integration domain"
                )));
            }
        }
        if k == 0 {
            return Ok(Self {
                kernel: kernel.clone(),
                measure: measure.clone(),
                nodes: DMatrix::zeros(0, measure.dim()),
                values,
                kernel_means: DVector::zeros(0),
                initial_error: c,
                weights: DVector::zeros(0),
                jitter: 0.0,
                factor: None,
            });
        }
        let z = kernel.kernel_means(measure, &nodes)?;
        let (factor, jitter) = factor_gram(kernel, &nodes)?;
        let weights = factor.solve(&z);
        Ok(Self {
            kernel: kernel.clone(),
            measure: measure.clone(),
            nodes,
            values,
            kernel_means: z,
            initial_error: c,
            weights,
            jitter,
            factor: Some(factor),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean(&self) -> f64 {
        self.weights.dot(&self.values)
    }

    /// `c − zᵀK⁻¹z`, clipped to `[0, c]`.
    pub fn variance(&self) -> f64 {
        (self.initial_error - self.kernel_means.dot(&self.weights)).clamp(0.0, self.initial_error)
    }

    /// Scalar belief over the integral.
    pub fn belief(&self) -> Result<Gaussian> {
        Gaussian::new(
            DVector::from_element(1, self.mean()),
            DMatrix::from_element(1, 1, self.variance()),
        )
    }

    /// Lower Cholesky factor of the jittered Gram matrix.
    pub fn gram_factor(&self) -> Option<DMatrix<f64>> {
        self.factor.as_ref().map(|f| f.l())
    }
}

fn factor_gram(kernel: &SquaredExpKernel, nodes: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let gram = kernel.gram(nodes);
    for rel in JITTER {
        let jitter = rel * kernel.output_scale;
        let mut m = gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
    }
    Err(numerical(
        "Gram matrix is singular after jitter escalation; remove duplicate or near-duplicate nodes",
    ))
}

/// Bayesian quadrature with the given nodes (one per row).
pub fn bq_integrate(problem: &QuadProblem, nodes: DMatrix<f64>, kernel: &SquaredExpKernel) -> Result<BqState> {
    let values = if nodes.nrows() == 0 {
        DVector::zeros(0)
    } else {
        problem.evaluate(&nodes)?
    };
    BqState::fit(problem.measure(), kernel, nodes, values)
}

/// Bayesian Monte Carlo: i.i.d. nodes from the (normalized) measure, then
/// Bayesian quadrature.
pub fn bayesian_monte_carlo<R: Rng + ?Sized>(
    problem: &QuadProblem,
    n_nodes: usize,
    kernel: &SquaredExpKernel,
    rng: &mut R,
) -> Result<BqState> {
    let nodes = problem.measure().sample(rng, n_nodes);
    bq_integrate(problem, nodes, kernel)
}

/// Outcome of [`optimize_lengthscale`].
#[derive(Debug, Clone)]
pub struct LengthscaleFit {
    pub kernel: SquaredExpKernel,
    pub candidates: Vec<f64>,
    /// Profile log marginal likelihood per candidate.
    pub log_likelihoods: Vec<f64>,
    pub warnings: Vec<String>,
}

/// 25 log-uniform lengthscales spanning `[1e-2, 1e2]` times the median
/// pairwise node distance.
pub fn lengthscale_grid(nodes: &DMatrix<f64>) -> Result<Vec<f64>> {
    let median = median_pairwise_distance(nodes)?;
    Ok((0..25)
        .map(|i| median * 10f64.powf(-2.0 + 4.0 * i as f64 / 24.0))
        .collect())
}

fn median_pairwise_distance(nodes: &DMatrix<f64>) -> Result<f64> {
    let k = nodes.nrows();
    let mut d = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            d.push((nodes.row(i) - nodes.row(j)).norm());
        }
    }
    d.retain(|v| *v > 0.0);
    if d.is_empty() {
        return Err(argument("lengthscale fitting needs at least two distinct nodes"));
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    Ok(if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    })
}

/// Profile log marginal likelihood of `values` under an isotropic
/// squared-exponential process with lengthscale `l`, with the output scale at
/// its maximizer `σ̂² = yᵀK₁⁻¹y/k`. Returns `(log likelihood, σ̂²)`.
pub fn profile_log_likelihood(nodes: &DMatrix<f64>, values: &DVector<f64>, l: f64) -> Result<(f64, f64)> {
    let k = nodes.nrows();
    let unit = SquaredExpKernel::isotropic(nodes.ncols(), l, 1.0)?;
    let (chol, _) = factor_gram(&unit, nodes)?;
    let quad = values.dot(&chol.solve(values));
    let sigma2 = quad / k as f64;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let kf = k as f64;
    let ll = -0.5 * kf * sigma2.ln() - 0.5 * log_det - 0.5 * kf * (1.0 + (2.0 * std::f64::consts::PI).ln());
    Ok((ll, sigma2))
}

/// Maximum-likelihood output scale `σ̂² = yᵀK₁⁻¹y/k` for fixed lengthscales,
/// where `K₁` is the Gram matrix at unit output scale.
pub fn output_scale_mle(lengthscales: &[f64], nodes: &DMatrix<f64>, values: &DVector<f64>) -> Result<f64> {
    let k = nodes.nrows();
    if k == 0 || values.len() != k {
        return Err(argument(format!("{} values for {k} nodes", values.len())));
    }
    let unit = SquaredExpKernel::new(lengthscales.to_vec(), 1.0)?;
    let (chol, _) = factor_gram(&unit, nodes)?;
    Ok(values.dot(&chol.solve(values)) / k as f64)
}

/// Isotropic lengthscale by grid search over the profile log marginal
/// likelihood; `candidates` defaults to [`lengthscale_grid`]. Ties go to the
/// smaller lengthscale.
pub fn optimize_lengthscale(
    nodes: &DMatrix<f64>,
    values: &DVector<f64>,
    candidates: Option<&[f64]>,
) -> Result<LengthscaleFit> {
    if nodes.nrows() != values.len() {
        return Err(argument(format!("{} values for {} nodes", values.len(), nodes.nrows())));
    }
    let candidates = match candidates {
        Some([]) => return Err(argument("no candidate lengthscales")),
        Some(c) => {
            median_pairwise_distance(nodes)?;
            c.to_vec()
        }
        None => lengthscale_grid(nodes)?,
    };
    let dim = nodes.ncols();
    let first = values[0];
    if values.iter().all(|v| *v == first) {
        let l = candidates.iter().copied().fold(f64::INFINITY, f64::min);
        let scale = if first == 0.0 { 1.0 } else { first * first };
        return Ok(LengthscaleFit {
            kernel: SquaredExpKernel::isotropic(dim, l, scale)?,
            log_likelihoods: vec![f64::NAN; candidates.len()],
            candidates,
            warnings: vec![format!(
                "all integrand values are identical; using the smallest candidate lengthscale {l:e}"
            )],
        });
    }
    let mut log_likelihoods = Vec::with_capacity(candidates.len());
    let mut best: Option<(f64, f64, f64)> = None;
    for &l in &candidates {
        let (ll, sigma2) = profile_log_likelihood(nodes, values, l)?;
        log_likelihoods.push(ll);
        let better = match best {
            None => true,
            Some((best_ll, best_l, _)) => ll > best_ll || (ll == best_ll && l < best_l),
        };
        if better {
            best = Some((ll, l, sigma2));
        }
    }
    let (_, l, sigma2) = best.expect("at least one candidate");
    Ok(LengthscaleFit {
        kernel: SquaredExpKernel::isotropic(dim, l, sigma2)?,
        candidates,
        log_likelihoods,
        warnings: vec![],
    })
}
