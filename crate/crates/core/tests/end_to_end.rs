//! Exercises the public API the way a downstream crate would.

use nalgebra::{DMatrix, DVector};
use pnkit::diffeq::{perturbed_solve, solve_ivp, EkMode, Ivp, OdeSolverOptions, RkMethod};
use pnkit::linalg::{problinsolve, LinearSystem};
use pnkit::problems::{builtin, random_spd_system, Problem, ProblemSpec};
use pnkit::quad::{bq_integrate, Measure, QuadProblem, SquaredExpKernel};
use pnkit::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn linear_solve_recovers_known_solution() {
    let sys = random_spd_system(15, 50.0, 4).unwrap();
    let belief = problinsolve(&sys.system, None, None).unwrap();
    let err = (belief.x.mean() - &sys.solution).amax();
    assert!(err < 1e-6, "error {err}");
    assert!(belief.iterations <= 15);
}

#[test]
fn mismatched_shapes_are_argument_errors() {
    let a = DMatrix::identity(3, 3);
    let b = DVector::zeros(2);
    assert!(matches!(LinearSystem::dense(a, b), Err(Error::Argument(_))));
}

#[test]
fn logistic_filter_tracks_closed_form() {
    let ivp = Ivp::new(
        |y, _t| y.map(|v| v * (1.0 - v)),
        0.0,
        5.0,
        DVector::from_element(1, 0.1),
    )
    .unwrap();
    for mode in [EkMode::Ek0, EkMode::Ek1] {
        let opts = OdeSolverOptions {
            rtol: 1e-7,
            atol: 1e-9,
            mode,
            ..Default::default()
        };
        let post = solve_ivp(&ivp, &opts).unwrap();
        for t in [1.0, 2.5, 5.0] {
            let exact = 1.0 / (1.0 + 9.0 * f64::exp(-t));
            let g = post.evaluate_solution(t).unwrap();
            assert!((g.mean()[0] - exact).abs() < 1e-4, "{mode:?} t={t}");
            assert!(g.std()[0].is_finite());
        }
    }
}

#[test]
fn perturbed_ensemble_is_reproducible() {
    let ivp = Ivp::new(|y, _t| -y, 0.0, 1.0, DVector::from_element(1, 1.0)).unwrap();
    let a = perturbed_solve(&ivp, RkMethod::Rk4, 0.1, 1.0, 10, 9).unwrap();
    let b = perturbed_solve(&ivp, RkMethod::Rk4, 0.1, 1.0, 10, 9).unwrap();
    assert_eq!(a.stats_at(1.0).unwrap(), b.stats_at(1.0).unwrap());
}

#[test]
fn bq_integrates_smooth_function_on_interval() {
    let measure = Measure::lebesgue(vec![0.0], vec![1.0], false).unwrap();
    let problem = QuadProblem::new(|x| (3.0 * x[0]).cos(), measure).unwrap();
    let nodes = DMatrix::from_fn(12, 1, |i, _| i as f64 / 11.0);
    let kernel = SquaredExpKernel::new(vec![0.4], 1.0).unwrap();
    let state = bq_integrate(&problem, nodes, &kernel).unwrap();
    let exact = 3f64.sin() / 3.0;
    assert!((state.mean() - exact).abs() < 1e-5);
    assert!(state.variance() >= 0.0);
}

#[test]
fn builtin_problems_round_trip_through_json() {
    for name in [
        "hilbert10",
        "logistic",
        "linear_decay",
        "lotka_volterra",
        "genz_oscillatory_1d",
        "gauss_x2",
    ] {
        let spec = builtin(name).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back = ProblemSpec::from_json_str(&text).unwrap();
        assert!(back.resolve().is_ok(), "{name}");
    }
}

#[test]
fn problem_file_quad_samples_deterministically() {
    let spec = builtin("gauss_x2").unwrap();
    let Problem::Quad(q) = spec.resolve().unwrap() else {
        panic!("gauss_x2 is a quadrature problem")
    };
    let draw = |seed| q.problem.measure().sample(&mut ChaCha8Rng::seed_from_u64(seed), 5);
    assert_eq!(draw(3), draw(3));
    assert_ne!(draw(3), draw(4));
}

#[test]
fn unknown_fields_are_rejected() {
    let text = r#"{"schema_version": 1, "kind": "ivp", "parameters": {"type": "logistic", "y0": 0.1, "t0": 0.0, "tmax": 1.0, "extra": 1}}"#;
    assert!(ProblemSpec::from_json_str(text).is_err());
}
