//! Acceptance criteria, each against an oracle written here independently of
//! the library. Run with `cargo test --test acceptance -- --nocapture` to see
//! one line per criterion.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use pnkit::diffeq::{perturbed_solve, rk_solve, solve_ivp, EkMode, Ivp, OdeSolverOptions, RkMethod};
use pnkit::filtsmooth::{
    filter, predict, rts_smooth, sqrt_filter, sqrt_predict, sqrt_smooth, sqrt_update, update, FilterStep,
    GaussianTransition, LinearObservationModel,
};
use pnkit::linalg::{matrix_based_update, problinsolve, LinearSystem, SolverComponents, StoppingConfig};
use pnkit::problems::{builtin, Problem};
use pnkit::quad::{bayesian_monte_carlo, bq_integrate, profile_log_likelihood, Measure, QuadProblem, SquaredExpKernel};
use pnkit::randvars::{Gaussian, MatrixGaussian};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `QᵀDQ` with a geometric spectrum on `[1, cond]`.
fn random_spd(rng: &mut ChaCha8Rng, n: usize, cond: f64) -> DMatrix<f64> {
    let q = normal_matrix(rng, n, n).qr().q();
    let d = DVector::from_fn(n, |i, _| cond.powf(i as f64 / (n - 1).max(1) as f64));
    let a = q.transpose() * DMatrix::from_diagonal(&d) * q;
    (&a + a.transpose()) * 0.5
}

fn spd_with_floor(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let b = normal_matrix(rng, n, n);
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}

// 1. CG equivalence

/// Hestenes–Stiefel conjugate gradients from zero, every iterate.
fn cg_iterates(a: &DMatrix<f64>, b: &DVector<f64>, iters: usize) -> Vec<DVector<f64>> {
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut out = vec![x.clone()];
    for _ in 0..iters {
        let ap = a * &p;
        let rr = r.dot(&r);
        let alpha = rr / p.dot(&ap);
        x += &p * alpha;
        r -= &ap * alpha;
        p = &r + &p * (r.dot(&r) / rr);
        out.push(x.clone());
    }
    out
}

fn cg_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = 0.0_f64;
    for case in 0..20 {
        let n = 5 + case * 45 / 19;
        let a = random_spd(&mut rng, n, 10.0);
        let b = normal_vector(&mut rng, n);
        let belief = problinsolve(
            &LinearSystem::dense(a.clone(), b.clone()).map_err(|e| e.to_string())?,
            None,
            None,
        )
        .map_err(|e| e.to_string())?;
        let reference = cg_iterates(&a, &b, belief.iterations);
        let x_star = a.clone().cholesky().ok_or("not spd")?.solve(&b);
        ensure(reference.len() == belief.mean_iterates.len(), || {
            format!("n={n}: iterate count")
        })?;
        for (k, (ours, cg)) in belief.mean_iterates.iter().zip(&reference).enumerate() {
            let err = (ours - cg).norm() / x_star.norm();
            worst = worst.max(err);
            ensure(err <= 1e-8, || {
                format!("n={n}, iteration {k}: relative deviation {err:e}")
            })?;
        }
    }
    Ok(format!("20 systems, worst relative deviation {worst:.1e}"))
}

// 2. Matrix-based interpolation and recovery

fn matrix_based() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut worst_interp = 0.0_f64;
    for n in [4, 10, 15] {
        let a = random_spd(&mut rng, n, 30.0);
        let system = LinearSystem::dense(a, normal_vector(&mut rng, n)).map_err(|e| e.to_string())?;
        let components = SolverComponents::with_stopping(StoppingConfig {
            maxiter: Some(n / 2),
            ..Default::default()
        });
        let belief = problinsolve(&system, None, Some(components)).map_err(|e| e.to_string())?;
        let ainv = belief.ainv.ok_or("no inverse belief")?;
        for (s, y) in belief.directions.iter().zip(&belief.observations) {
            let err = (ainv.mean() * y - s).amax();
            worst_interp = worst_interp.max(err);
            ensure(err <= 1e-9, || format!("n={n}: interpolation error {err:e}"))?;
        }
    }
    let mut worst_inv = 0.0_f64;
    for n in [2, 5, 10, 20] {
        let a = random_spd(&mut rng, n, 50.0);
        let inv = a.clone().try_inverse().ok_or("singular")?;
        let w = DMatrix::identity(n, n);
        let prior = MatrixGaussian::new(w.clone(), w, true).map_err(|e| e.to_string())?;
        let s = normal_matrix(&mut rng, n, n);
        let post = matrix_based_update(&prior, &s, &(&a * &s)).map_err(|e| e.to_string())?;
        for k in 0..n {
            let err = (post.mean() * (&a * s.column(k)) - s.column(k)).amax();
            ensure(err <= 1e-9, || {
                format!("n={n}: direction {k} interpolation error {err:e}")
            })?;
        }
        let err = (post.mean() - &inv).amax();
        worst_inv = worst_inv.max(err);
        ensure(err <= 1e-8, || format!("n={n}: distance to inverse {err:e}"))?;
    }
    Ok(format!("interpolation {worst_interp:.1e}, inverse {worst_inv:.1e}"))
}

// 3. Output type

fn output_type() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    for n in [1, 3, 12] {
        let system =
            LinearSystem::dense(random_spd(&mut rng, n, 5.0), normal_vector(&mut rng, n)).map_err(|e| e.to_string())?;
        let belief = problinsolve(&system, None, None).map_err(|e| e.to_string())?;
        let x: &Gaussian = &belief.x;
        ensure(x.dim() == n && x.mean().len() == n && x.cov().shape() == (n, n), || {
            format!("n={n}: belief has dimension {}", x.dim())
        })?;
    }
    Ok("Gaussian of dimension n for n = 1, 3, 12".into())
}

// 4. Filter and smoother against the batch posterior

struct Chain {
    initial: Gaussian,
    steps: Vec<FilterStep>,
}

fn random_chain(rng: &mut ChaCha8Rng, n_steps: usize, dim: usize, obs_dim: usize) -> Result<Chain, String> {
    let initial = Gaussian::new(normal_vector(rng, dim), spd_with_floor(rng, dim, 0.5)).map_err(|e| e.to_string())?;
    let mut steps = Vec::new();
    for k in 0..n_steps {
        let phi = DMatrix::identity(dim, dim) * 0.9 + normal_matrix(rng, dim, dim) * 0.2;
        let transition = GaussianTransition::new(phi, spd_with_floor(rng, dim, 0.1))
            .and_then(|t| t.with_drift(normal_vector(rng, dim) * 0.1))
            .map_err(|e| e.to_string())?;
        let observation = if k % 4 == 2 {
            None
        } else {
            let model =
                LinearObservationModel::new(normal_matrix(rng, obs_dim, dim), spd_with_floor(rng, obs_dim, 0.2))
                    .and_then(|m| m.with_offset(normal_vector(rng, obs_dim) * 0.1))
                    .map_err(|e| e.to_string())?;
            Some((model, normal_vector(rng, obs_dim)))
        };
        steps.push(FilterStep {
            time: (k + 1) as f64,
            transition,
            observation,
        });
    }
    Ok(Chain { initial, steps })
}

/// Marginals of the joint Gaussian over all states conditioned on the data
/// up to step `upto` (all of it when `None`).
fn batch_marginals(chain: &Chain, upto: Option<usize>) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let d = chain.initial.dim();
    let n = chain.steps.len() + 1;
    let mut mean = DVector::zeros(n * d);
    let mut cov = DMatrix::zeros(n * d, n * d);
    mean.rows_mut(0, d).copy_from(chain.initial.mean());
    cov.view_mut((0, 0), (d, d)).copy_from(chain.initial.cov());
    for (k, step) in chain.steps.iter().enumerate() {
        let phi = step.transition.phi();
        let m = phi * mean.rows(k * d, d) + step.transition.drift();
        mean.rows_mut((k + 1) * d, d).copy_from(&m);
        // Cov(x_{k+1}, x_j) = Φ·Cov(x_k, x_j) for j ≤ k
        let rows = phi * cov.view((k * d, 0), (d, (k + 1) * d));
        cov.view_mut(((k + 1) * d, 0), (d, (k + 1) * d)).copy_from(&rows);
        cov.view_mut((0, (k + 1) * d), ((k + 1) * d, d))
            .copy_from(&rows.transpose());
        let block = phi * cov.view((k * d, k * d), (d, d)) * phi.transpose() + step.transition.noise_cov();
        cov.view_mut(((k + 1) * d, (k + 1) * d), (d, d)).copy_from(&block);
    }
    let last = upto.unwrap_or(chain.steps.len());
    for (k, step) in chain.steps.iter().enumerate().take(last) {
        let Some((model, y)) = &step.observation else { continue };
        let mut h = DMatrix::zeros(model.obs_dim(), n * d);
        h.view_mut((0, (k + 1) * d), (model.obs_dim(), d)).copy_from(model.h());
        let s = &h * &cov * h.transpose() + model.noise_cov();
        let gain = &cov * h.transpose() * s.try_inverse().expect("innovation invertible");
        mean = &mean + &gain * (y - model.offset() - &h * &mean);
        cov = &cov - &gain * &h * &cov;
    }
    (0..n)
        .map(|k| {
            let c = cov.view((k * d, k * d), (d, d)).into_owned();
            (mean.rows(k * d, d).into_owned(), (&c + c.transpose()) * 0.5)
        })
        .collect()
}

fn gaussian_gap(g: &Gaussian, (m, c): &(DVector<f64>, DMatrix<f64>)) -> f64 {
    let scale = 1.0 + m.amax() + c.amax();
    ((g.mean() - m).amax()).max((g.cov() - c).amax()) / scale
}

fn filter_smoother_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let mut worst = 0.0_f64;
    let mut chains = 0;
    for (n_steps, dim, obs_dim) in [(12, 1, 1), (8, 2, 1), (12, 3, 2), (5, 4, 3), (10, 6, 2), (12, 6, 6)] {
        let chain = random_chain(&mut rng, n_steps, dim, obs_dim)?;
        let smooth_oracle = batch_marginals(&chain, None);
        let vanilla = filter(0.0, chain.initial.clone(), &chain.steps).map_err(|e| e.to_string())?;
        let square_root = sqrt_filter(0.0, chain.initial.clone(), &chain.steps).map_err(|e| e.to_string())?;
        for k in 0..=n_steps {
            let filtered_oracle = &batch_marginals(&chain, Some(k))[k];
            for traj in [&vanilla, &square_root] {
                let gap = gaussian_gap(&traj.filtered[k], filtered_oracle);
                worst = worst.max(gap);
                ensure(gap <= 1e-8, || {
                    format!("{n_steps} steps, dim {dim}: filtered k={k} off by {gap:e}")
                })?;
            }
        }
        let smoothed = [
            rts_smooth(&vanilla).map_err(|e| e.to_string())?,
            sqrt_smooth(&square_root).map_err(|e| e.to_string())?,
        ];
        for s in &smoothed {
            for (k, (g, oracle)) in s.iter().zip(&smooth_oracle).enumerate() {
                let gap = gaussian_gap(g, oracle);
                worst = worst.max(gap);
                ensure(gap <= 1e-8, || {
                    format!("{n_steps} steps, dim {dim}: smoothed k={k} off by {gap:e}")
                })?;
            }
        }
        chains += 1;
    }
    Ok(format!("{chains} chains, worst relative gap {worst:.1e}"))
}

// 5. Square-root stability

fn iwp_transition(q: usize, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let fact = |k: usize| (1..=k).product::<usize>() as f64;
    let phi = DMatrix::from_fn(q + 1, q + 1, |i, j| {
        if j >= i {
            h.powi((j - i) as i32) / fact(j - i)
        } else {
            0.0
        }
    });
    let cov = DMatrix::from_fn(q + 1, q + 1, |i, j| {
        let p = 2 * q + 1 - i - j;
        h.powi(p as i32) / (p as f64 * fact(q - i) * fact(q - j))
    });
    (phi, cov)
}

fn sqrt_stability() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let state =
            Gaussian::new(normal_vector(&mut rng, 4), spd_with_floor(&mut rng, 4, 0.3)).map_err(|e| e.to_string())?;
        let t = GaussianTransition::new(normal_matrix(&mut rng, 4, 4), spd_with_floor(&mut rng, 4, 0.1))
            .map_err(|e| e.to_string())?;
        let model = LinearObservationModel::new(normal_matrix(&mut rng, 2, 4), spd_with_floor(&mut rng, 2, 0.1))
            .map_err(|e| e.to_string())?;
        let y = normal_vector(&mut rng, 2);
        let pv = predict(&state, &t).map_err(|e| e.to_string())?;
        let ps = sqrt_predict(&state, &t).map_err(|e| e.to_string())?;
        let (uv, _) = update(&pv, &model, &y).map_err(|e| e.to_string())?;
        let (us, _) = sqrt_update(&ps, &model, &y).map_err(|e| e.to_string())?;
        for (a, b) in [(&ps, &pv), (&us, &uv)] {
            let gap = (a.mean() - b.mean()).amax().max((a.cov() - b.cov()).amax());
            worst = worst.max(gap);
            ensure(gap <= 1e-8, || format!("square-root and vanilla differ by {gap:e}"))?;
        }
    }

    let (q, h) = (4, 1e-3);
    let (phi, cov) = iwp_transition(q, h);
    let transition = GaussianTransition::new(phi, cov).map_err(|e| e.to_string())?;
    let mut e1 = DMatrix::zeros(1, q + 1);
    e1[(0, 1)] = 1.0;
    let steps: Vec<FilterStep> = (1..=300)
        .map(|k| FilterStep {
            time: k as f64 * h,
            transition: transition.clone(),
            observation: Some((
                LinearObservationModel::exact(e1.clone()),
                DVector::from_element(1, (k as f64 * h).cos()),
            )),
        })
        .collect();
    let init = Gaussian::new(
        DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0, 0.0]),
        DMatrix::identity(q + 1, q + 1),
    )
    .map_err(|e| e.to_string())?;
    let traj = sqrt_filter(0.0, init.clone(), &steps).map_err(|e| format!("square-root filter failed: {e}"))?;
    let smoothed = sqrt_smooth(&traj).map_err(|e| format!("square-root smoother failed: {e}"))?;
    for g in traj.filtered.iter().chain(&smoothed) {
        let eig = g.cov().clone().symmetric_eigenvalues();
        ensure(eig.min() >= -1e-12 * (1.0 + eig.max()), || {
            format!("negative eigenvalue {:e}", eig.min())
        })?;
        ensure(g.mean().iter().all(|v| v.is_finite()), || "non-finite mean".into())?;
    }
    let vanilla = match filter(0.0, init, &steps) {
        Ok(t) => {
            let min_var = t
                .filtered
                .iter()
                .flat_map(|g| g.variances().iter().copied().collect::<Vec<_>>())
                .fold(f64::INFINITY, f64::min);
            format!("vanilla ran, min variance {min_var:.1e}")
        }
        Err(e) => format!("vanilla failed: {e}"),
    };
    Ok(format!("steps agree to {worst:.1e}; stress instance PSD ({vanilla})"))
}

// 6-8. ODE filter

fn logistic_ivp() -> Result<(Ivp, f64), String> {
    match builtin("logistic")
        .and_then(|s| s.resolve())
        .map_err(|e| e.to_string())?
    {
        Problem::Ivp(ivp) => {
            let y0 = ivp.y0()[0];
            Ok((ivp, y0))
        }
        _ => Err("logistic is not an IVP".into()),
    }
}

fn logistic_exact(t: f64, y0: f64) -> f64 {
    y0 / (y0 + (1.0 - y0) * (-t).exp())
}

fn logistic_posterior() -> Result<(pnkit::diffeq::OdePosterior, f64), String> {
    let (ivp, y0) = logistic_ivp()?;
    let options = OdeSolverOptions {
        q: 2,
        mode: EkMode::Ek1,
        rtol: 1e-6,
        ..Default::default()
    };
    Ok((solve_ivp(&ivp, &options).map_err(|e| e.to_string())?, y0))
}

fn ode_accuracy_and_order() -> Check {
    let (posterior, y0) = logistic_posterior()?;
    let marginals = posterior.solution_marginals().map_err(|e| e.to_string())?;
    let max_err = posterior
        .times()
        .iter()
        .zip(&marginals)
        .map(|(t, m)| (m.mean()[0] - logistic_exact(*t, y0)).abs())
        .fold(0.0_f64, f64::max);
    ensure(max_err <= 1e-4, || format!("logistic max error {max_err:e}"))?;

    let decay =
        Ivp::new(|y: &DVector<f64>, _| -y, 0.0, 1.0, DVector::from_element(1, 1.0)).map_err(|e| e.to_string())?;
    let mut slopes = Vec::new();
    for q in 1..=3 {
        let finals = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&h| {
                let options = OdeSolverOptions {
                    q,
                    mode: EkMode::Ek1,
                    steps: OdeSolverOptions::fixed_step(&decay, h)?,
                    ..Default::default()
                };
                Ok(solve_ivp(&decay, &options)?.solution_marginals()?.pop().unwrap().mean()[0])
            })
            .collect::<pnkit::Result<Vec<f64>>>()
            .map_err(|e| e.to_string())?;
        // self-convergence: successive differences shrink by 2^q
        let diffs: Vec<f64> = finals.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
        for w in diffs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            slopes.push(slope);
            ensure(slope >= q as f64 - 0.4, || {
                format!("q={q}: self-convergence slope {slope:.2}")
            })?;
        }
        let errors: Vec<f64> = finals.iter().map(|y| (y - (-1f64).exp()).abs()).collect();
        for w in errors.windows(2) {
            let slope = (w[0] / w[1]).log2();
            ensure(slope >= q as f64 - 0.4, || {
                format!("q={q}: convergence slope {slope:.2} against e^-1")
            })?;
        }
    }
    let slopes: Vec<String> = slopes.iter().map(|s| format!("{s:.2}")).collect();
    Ok(format!(
        "logistic max error {max_err:.1e}; self-convergence slopes [{}]",
        slopes.join(", ")
    ))
}

fn calibration_coverage() -> Check {
    let (posterior, y0) = logistic_posterior()?;
    let marginals = posterior.solution_marginals().map_err(|e| e.to_string())?;
    let inside = posterior
        .times()
        .iter()
        .zip(&marginals)
        .filter(|(t, m)| (m.mean()[0] - logistic_exact(**t, y0)).abs() <= 3.0 * m.std()[0])
        .count();
    let coverage = inside as f64 / marginals.len() as f64;
    ensure(coverage >= 0.9, || format!("coverage {coverage:.3}"))?;
    Ok(format!(
        "{inside} of {} grid points covered ({coverage:.3}), σ̂² = {:.2e}",
        marginals.len(),
        posterior.diffusion()
    ))
}

fn dense_output_identity() -> Check {
    let (posterior, _) = logistic_posterior()?;
    for (t, state) in posterior.times().iter().zip(posterior.states()) {
        let evaluated = posterior.evaluate(*t).map_err(|e| e.to_string())?;
        ensure(&evaluated == state, || {
            format!("evaluation at node {t} differs from the stored state")
        })?;
    }
    Ok(format!("{} nodes reproduced exactly", posterior.times().len()))
}

// 9. Perturbed solver

fn perturbed() -> Check {
    let decay =
        Ivp::new(|y: &DVector<f64>, _| -y, 0.0, 1.0, DVector::from_element(1, 1.0)).map_err(|e| e.to_string())?;
    for method in [RkMethod::Euler, RkMethod::Rk4] {
        let (grid, base) = rk_solve(&decay, method, 0.07).map_err(|e| e.to_string())?;
        let ensemble = perturbed_solve(&decay, method, 0.07, 0.0, 5, 3).map_err(|e| e.to_string())?;
        ensure(ensemble.times == grid, || format!("{method:?}: grids differ"))?;
        for m in &ensemble.members {
            ensure(m.values == base, || {
                format!("{method:?}: scale 0 member differs from the base method")
            })?;
        }
    }
    let members = 100;
    let ensemble = perturbed_solve(&decay, RkMethod::Rk4, 0.05, 1.0, members, 7).map_err(|e| e.to_string())?;
    let k = ensemble.times.len() - 1;
    let mean = ensemble.mean(k)[0];
    let se = ensemble.std(k)[0] / (members as f64).sqrt();
    let z = (mean - (-1f64).exp()).abs() / se;
    ensure(se > 0.0 && z <= 3.0, || {
        format!("mean {mean}, standard error {se:e}, z = {z:.2}")
    })?;
    Ok(format!(
        "scale 0 bit-identical for Euler and RK4; ensemble mean z = {z:.2}"
    ))
}

// 10. Kernel embeddings against numerical integration

fn integrate_pieces(f: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|p| *p > a && *p < b).collect();
    pts.extend([a, b]);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2)
        .map(|w| quadrature::double_exponential::integrate(f, w[0], w[1], 1e-16).integral)
        .sum()
}

type Axis<'a> = (f64, f64, Vec<f64>, Box<dyn Fn(f64) -> f64 + 'a>);

/// Per-axis range, breakpoints and density of the measure.
fn axis(measure: &Measure, i: usize) -> Axis<'_> {
    match measure {
        Measure::Gaussian { mean, var } => {
            let (m, v) = (mean[i], var[i]);
            let sd = v.sqrt();
            let pdf = move |x: f64| (-0.5 * (x - m).powi(2) / v).exp() / (2.0 * PI * v).sqrt();
            (
                m - 12.0 * sd,
                m + 12.0 * sd,
                vec![m - 3.0 * sd, m, m + 3.0 * sd],
                Box::new(pdf),
            )
        }
        Measure::LebesgueBox {
            lower,
            upper,
            normalize,
        } => {
            let w = if *normalize { 1.0 / (upper[i] - lower[i]) } else { 1.0 };
            (lower[i], upper[i], vec![], Box::new(move |_| w))
        }
    }
}

/// The kernel and the measure are products over axes, so both embeddings are
/// products of one-dimensional integrals.
fn kernel_mean_oracle(kernel: &SquaredExpKernel, measure: &Measure, x: &[f64]) -> f64 {
    let mut total = kernel.output_scale;
    for (i, &xi) in x.iter().enumerate() {
        let l = kernel.lengthscales[i];
        let (a, b, mut breaks, pdf) = axis(measure, i);
        breaks.extend([-5.0, -2.0, 0.0, 2.0, 5.0].iter().map(|k| xi + k * l));
        total *= integrate_pieces(&|v| pdf(v) * (-0.5 * ((xi - v) / l).powi(2)).exp(), a, b, &breaks);
    }
    total
}

fn initial_error_oracle(kernel: &SquaredExpKernel, measure: &Measure) -> f64 {
    let mut total = kernel.output_scale;
    for i in 0..kernel.dim() {
        let l = kernel.lengthscales[i];
        let (a, b, outer, pdf) = axis(measure, i);
        let inner = |u: f64| {
            let breaks: Vec<f64> = outer
                .iter()
                .copied()
                .chain([-5.0, -2.0, 0.0, 2.0, 5.0].iter().map(|k| u + k * l))
                .collect();
            pdf(u) * integrate_pieces(&|v| pdf(v) * (-0.5 * ((u - v) / l).powi(2)).exp(), a, b, &breaks)
        };
        total *= integrate_pieces(&inner, a, b, &outer);
    }
    total
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn embeddings() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let (mut worst_mean, mut worst_c) = (0.0_f64, 0.0_f64);
    for gaussian in [true, false] {
        for case in 0..20 {
            let dim = 1 + case % 3;
            let ls = (0..dim).map(|_| log_uniform(&mut rng, 0.2, 5.0)).collect();
            let kernel = SquaredExpKernel::new(ls, log_uniform(&mut rng, 0.5, 3.0)).map_err(|e| e.to_string())?;
            let measure = if gaussian {
                let mean = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                let var = (0..dim).map(|_| log_uniform(&mut rng, 0.1, 4.0)).collect();
                Measure::gaussian(mean, var)
            } else {
                let lower: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..0.0)).collect();
                let upper = lower.iter().map(|a| a + log_uniform(&mut rng, 0.2, 4.0)).collect();
                Measure::lebesgue(lower, upper, rng.random::<bool>())
            }
            .map_err(|e| e.to_string())?;
            let x: Vec<f64> = (0..dim)
                .map(|i| match &measure {
                    Measure::Gaussian { mean, var } => mean[i] + 3.0 * var[i].sqrt() * rng.random_range(-1.0..1.0),
                    Measure::LebesgueBox { lower, upper, .. } => rng.random_range(lower[i] - 1.0..upper[i] + 1.0),
                })
                .collect();
            let z = kernel.kernel_mean(&measure, &x).map_err(|e| e.to_string())?;
            let oracle = kernel_mean_oracle(&kernel, &measure, &x);
            let err = (z - oracle).abs() / oracle.abs();
            worst_mean = worst_mean.max(err);
            ensure(err <= 1e-8, || {
                format!("kernel mean case {case}: relative error {err:e} for {measure:?}")
            })?;
            let c = kernel.initial_error(&measure).map_err(|e| e.to_string())?;
            let oracle = initial_error_oracle(&kernel, &measure);
            let err = (c - oracle).abs() / oracle.abs();
            worst_c = worst_c.max(err);
            ensure(err <= 1e-6, || {
                format!("initial error case {case}: relative error {err:e} for {measure:?}")
            })?;
        }
    }
    Ok(format!(
        "40 cases; kernel means {worst_mean:.1e}, initial errors {worst_c:.1e}"
    ))
}

// 11. Bayesian quadrature

fn bq_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1011);
    let mut worst_span = 0.0_f64;
    for measure in [
        Measure::gaussian(vec![0.5, -0.2], vec![1.0, 0.5]),
        Measure::lebesgue(vec![-1.0, 0.0], vec![2.0, 1.0], false),
        Measure::lebesgue(vec![-1.0, 0.0], vec![2.0, 1.0], true),
    ] {
        let measure = measure.map_err(|e| e.to_string())?;
        let kernel = SquaredExpKernel::new(vec![0.6, 0.9], 1.2).map_err(|e| e.to_string())?;
        let centers: Vec<[f64; 2]> = vec![[0.0, 0.2], [1.0, 0.8], [-0.5, 0.5]];
        let alpha: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        // the integral of k(·, c) is its kernel mean, here by numerical integration
        let exact: f64 = centers
            .iter()
            .zip(&alpha)
            .map(|(c, a)| a * kernel_mean_oracle(&kernel, &measure, c))
            .sum();
        let (k, cs, al) = (kernel.clone(), centers.clone(), alpha.clone());
        let problem = QuadProblem::new(
            move |x| cs.iter().zip(&al).map(|(c, a)| a * k.eval(x.as_slice(), c)).sum(),
            measure,
        )
        .map_err(|e| e.to_string())?;
        let nodes = DMatrix::from_row_slice(5, 2, &[0.0, 0.2, 1.0, 0.8, -0.5, 0.5, 1.5, 0.1, -0.9, 0.9]);
        let state = bq_integrate(&problem, nodes, &kernel).map_err(|e| e.to_string())?;
        let err = (state.mean() - exact).abs();
        worst_span = worst_span.max(err);
        ensure(err <= 1e-9, || format!("in-span integrand off by {err:e}"))?;
    }

    let nodes = DMatrix::from_fn(30, 1, |i, _| -5.0 + 10.0 * i as f64 / 29.0);
    let problem = QuadProblem::new(
        |x| x[0] * x[0],
        Measure::gaussian(vec![0.0], vec![1.0]).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let values = problem.evaluate(&nodes).map_err(|e| e.to_string())?;
    let (_, sigma2) = profile_log_likelihood(&nodes, &values, 1.0).map_err(|e| e.to_string())?;
    let kernel = SquaredExpKernel::new(vec![1.0], sigma2).map_err(|e| e.to_string())?;
    let state = bq_integrate(&problem, nodes, &kernel).map_err(|e| e.to_string())?;
    let (mean, std) = (state.mean(), state.variance().sqrt());
    ensure((mean - 1.0).abs() <= 1e-3, || format!("∫x² estimate {mean}"))?;
    ensure((mean - 1.0).abs() <= 3.0 * std, || {
        format!("∫x² estimate {mean} ± {std:e} excludes 1")
    })?;

    let exact = ((2.0 * PI * 0.3 + 5.0).sin() - (2.0 * PI * 0.3).sin()) / 5.0;
    let box01 = Measure::lebesgue(vec![0.0], vec![1.0], false).map_err(|e| e.to_string())?;
    let genz = QuadProblem::new(|x| (2.0 * PI * 0.3 + 5.0 * x[0]).cos(), box01).map_err(|e| e.to_string())?;
    let kernel = SquaredExpKernel::new(vec![0.3], 1.0).map_err(|e| e.to_string())?;
    let mut improved = 0;
    for seed in 0..5u64 {
        let err = |n| -> Result<f64, String> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((bayesian_monte_carlo(&genz, n, &kernel, &mut rng)
                .map_err(|e| e.to_string())?
                .mean()
                - exact)
                .abs())
        };
        if err(64)? < err(8)? {
            improved += 1;
        }
    }
    ensure(improved >= 4, || format!("BMC improved on {improved} of 5 seeds"))?;
    Ok(format!(
        "in-span {worst_span:.1e}; ∫x² error {:.1e} (std {std:.1e}); BMC improved on {improved}/5 seeds",
        (mean - 1.0).abs()
    ))
}

// 12. CLI determinism and exit codes

fn cli(args: &[&str], stdin: &[u8]) -> pnkit_cli::Outcome {
    let argv: Vec<String> = std::iter::once("pnkit")
        .chain(args.iter().copied())
        .map(String::from)
        .collect();
    let mut input = stdin;
    pnkit_cli::run(&argv, &mut input)
}

fn strip_timing(report: &str) -> Result<serde_json::Value, String> {
    let mut value: serde_json::Value = serde_json::from_str(report).map_err(|e| format!("invalid JSON report: {e}"))?;
    fn strip(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                map.remove("wall_time_s");
                map.remove("runtime_s");
                map.values_mut().for_each(strip);
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(strip),
            _ => {}
        }
    }
    strip(&mut value);
    Ok(value)
}

fn strip_csv_timing(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            let mut cells: Vec<&str> = line.split(',').collect();
            cells.remove(6);
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism_and_exit_codes() -> Check {
    let dir = std::env::temp_dir().join(format!("pnkit-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let nodes = dir.join("nodes.json");
    std::fs::write(&nodes, "[[-1.0], [0.0], [0.5], [2.0]]").map_err(|e| e.to_string())?;
    let nodes = nodes.to_str().unwrap();
    let blowup = dir.join("blowup.json");
    std::fs::write(
        &blowup,
        r#"{"schema_version": 1, "kind": "ivp", "parameters": {"type": "logistic", "y0": -0.5, "t0": 0.0, "tmax": 3.0}}"#,
    )
    .map_err(|e| e.to_string())?;
    let blowup = blowup.to_str().unwrap();
    let logistic_json = builtin("logistic")
        .and_then(|s| s.to_json_string())
        .map_err(|e| e.to_string())?;

    let runs: Vec<Vec<&str>> = vec![
        vec!["linsolve", "random_spd(n=10,seed=1)"],
        vec!["linsolve", "hilbert10", "--seed", "4"],
        vec!["odesolve", "linear_decay", "--rtol", "1e-8", "--eval", "1"],
        vec!["odesolve", "logistic", "--method", "ek0", "--grid", "0.1"],
        vec!["odesolve", "lotka_volterra", "--method", "perturbed", "--seed", "5"],
        vec!["odesolve", "-"],
        vec!["quad", "gauss_x2", "--n-nodes", "50", "--seed", "1"],
        vec![
            "quad",
            "genz_oscillatory_1d",
            "--n-nodes",
            "20",
            "--optimize-lengthscale",
        ],
        vec!["quad", "gauss_x2", "--nodes-file", nodes],
    ];
    for args in &runs {
        let stdin = if args.contains(&"-") {
            logistic_json.as_bytes()
        } else {
            b""
        };
        let (a, b) = (cli(args, stdin), cli(args, stdin));
        ensure(a.code == 0 && b.code == 0, || {
            format!("{args:?} exited {} ({})", a.code, a.stderr.trim())
        })?;
        ensure(strip_timing(&a.stdout)? == strip_timing(&b.stdout)?, || {
            format!("{args:?} reports differ")
        })?;
        ensure(a.stderr == b.stderr, || format!("{args:?} diagnostics differ"))?;
    }

    // same --out twice, so the echoed command matches
    let bench_dir = dir.join("bench");
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let out = cli(&["bench", "smoke", "--out", bench_dir.to_str().unwrap()], b"");
        ensure(out.code == 0, || {
            format!("bench smoke exited {}: {}", out.code, out.stderr.trim())
        })?;
        let mut files = Vec::new();
        for entry in std::fs::read_dir(&bench_dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
            let content = if path.extension().is_some_and(|e| e == "json") {
                strip_timing(&text)?.to_string()
            } else {
                strip_csv_timing(&text)
            };
            files.push((path, content));
        }
        files.sort();
        snapshots.push((strip_csv_timing(&out.stdout), files));
    }
    ensure(snapshots[0].0 == snapshots[1].0, || "bench summaries differ".into())?;
    ensure(snapshots[0].1.len() == 9, || {
        format!("bench wrote {} files", snapshots[0].1.len())
    })?;
    for (a, b) in snapshots[0].1.iter().zip(&snapshots[1].1) {
        ensure(a == b, || format!("bench output {} differs", a.0.display()))?;
    }

    let loose = dir.join("loose.json");
    let tight = dir.join("tight.json");
    std::fs::write(&loose, r#"{"quad_gauss_x2": 1.0}"#).map_err(|e| e.to_string())?;
    std::fs::write(&tight, r#"{"quad_gauss_x2": 1e-12}"#).map_err(|e| e.to_string())?;
    let missing = dir.join("does-not-exist.json");
    let missing = missing.to_str().unwrap();
    let matrix: Vec<(Vec<&str>, i32)> = vec![
        (vec!["linsolve", "random_spd(n=10,seed=1)"], 0),
        (vec!["linsolve", "hilbert10", "--maxiter", "0"], 2),
        (vec!["linsolve", missing], 1),
        (vec!["linsolve", "logistic"], 1),
        (vec!["odesolve", blowup], 1),
        (vec!["odesolve", "linear_decay", "--method", "rk45"], 64),
        (vec!["quad", "gauss_x2", "--n-nodes", "5", "--nodes-file", nodes], 64),
        (vec!["quad", "gauss_x2"], 64),
        (vec!["bench", ""], 64),
        (vec!["bench", "nightly"], 64),
        (vec!["bench", "smoke", "--tolerances", tight.to_str().unwrap()], 3),
        (vec!["bench", "smoke", "--tolerances", loose.to_str().unwrap()], 0),
        (vec!["frobnicate"], 64),
        (vec![], 64),
    ];
    for (args, expected) in &matrix {
        let out = cli(args, b"");
        ensure(out.code == *expected, || {
            format!(
                "{args:?}: exit {} instead of {expected}: {}",
                out.code,
                out.stderr.trim()
            )
        })?;
        if *expected != 0 {
            ensure(!out.stderr.trim().is_empty(), || {
                format!("{args:?}: no message on stderr")
            })?;
        }
    }
    let out = cli(&["linsolve", missing], b"");
    ensure(out.stderr.contains(missing), || {
        "missing-file message lacks the path".into()
    })?;
    let out = cli(&["bench", "smoke", "--tolerances", tight.to_str().unwrap()], b"");
    ensure(out.stderr.contains("quad_gauss_x2"), || {
        "gate failure does not name the failing row".into()
    })?;
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!(
        "{} commands reproducible, {} exit codes checked",
        runs.len() + 1,
        matrix.len()
    ))
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, Duration, fn() -> Check);
    let criteria: [Criterion; 12] = [
        ("1 CG equivalence", Duration::from_secs(5), cg_equivalence),
        ("2 matrix-based interpolation", Duration::from_secs(5), matrix_based),
        ("3 output type", Duration::from_secs(5), output_type),
        (
            "4 filter/smoother exactness",
            Duration::from_secs(5),
            filter_smoother_exactness,
        ),
        ("5 square-root stability", Duration::from_secs(5), sqrt_stability),
        (
            "6 ODE accuracy and order",
            Duration::from_secs(60),
            ode_accuracy_and_order,
        ),
        ("7 calibration coverage", Duration::from_secs(10), calibration_coverage),
        ("8 dense output identity", Duration::from_secs(5), dense_output_identity),
        ("9 perturbed solver", Duration::from_secs(10), perturbed),
        ("10 quadrature embeddings", Duration::from_secs(30), embeddings),
        ("11 BQ correctness", Duration::from_secs(30), bq_correctness),
        (
            "12 CLI determinism and exit codes",
            Duration::from_secs(10),
            determinism_and_exit_codes,
        ),
    ];
    let mut failures = Vec::new();
    println!();
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (verdict, detail) = match result {
            Ok(detail) if elapsed <= budget => ("PASS", detail),
            Ok(detail) => ("FAIL", format!("{detail}; took {elapsed:.2?}, budget {budget:?}")),
            Err(why) => ("FAIL", why),
        };
        println!("{verdict} {name} ({:.2}s): {detail}", elapsed.as_secs_f64());
        if verdict == "FAIL" {
            failures.push(name);
        }
    }
    assert!(failures.is_empty(), "failed: {failures:?}");
}
