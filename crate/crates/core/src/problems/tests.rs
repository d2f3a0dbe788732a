use nalgebra::DVector;
use serde_json::json;

use super::*;
use crate::Error;

#[test]
fn random_spd_scalar() {
    let r = random_spd_system(1, 50.0, 3).unwrap();
    assert_eq!(r.matrix.shape(), (1, 1));
    let d = r.matrix[(0, 0)];
    assert!(d > 0.0);
    assert!((r.system.b()[0] - d * r.solution[0]).abs() <= 1e-15 * d.abs().max(1.0));
}

#[test]
fn random_spd_unit_condition_is_identity() {
    let r = random_spd_system(8, 1.0, 4).unwrap();
    let eig = r.matrix.clone().symmetric_eigenvalues();
    assert!(eig.iter().all(|e| (e - 1.0).abs() <= 1e-12));
}

#[test]
fn random_spd_condition_target() {
    for target in [10.0, 1e3, 1e6] {
        let r = random_spd_system(30, target, 5).unwrap();
        let eig = r.matrix.clone().symmetric_eigenvalues();
        let cond = eig.max() / eig.min();
        assert!((cond / target - 1.0).abs() <= 0.1, "target {target}: {cond}");
        assert!((r.system.residual(&r.solution).unwrap()).amax() <= 1e-10 * target);
    }
}

#[test]
fn random_spd_is_seeded() {
    let a = random_spd_system(6, 20.0, 9).unwrap();
    let b = random_spd_system(6, 20.0, 9).unwrap();
    let c = random_spd_system(6, 20.0, 10).unwrap();
    assert_eq!(a.matrix, b.matrix);
    assert_eq!(a.solution, b.solution);
    assert_ne!(a.matrix, c.matrix);
    assert!(random_spd_system(0, 2.0, 1).is_err());
    assert!(random_spd_system(3, 0.5, 1).is_err());
}

#[test]
fn builtin_references() {
    let decay = builtin("linear_decay").unwrap();
    let r = decay.reference_solution.as_ref().unwrap();
    let times = r.times.as_ref().unwrap();
    let k = times.iter().position(|&t| t == 1.0).unwrap();
    assert_eq!(r.values[k][0], (-1f64).exp());
    assert_eq!(r.provenance, "analytic");

    let gauss = builtin("gauss_x2").unwrap();
    assert_eq!(gauss.reference_solution.unwrap().values, vec![vec![1.0]]);

    let logistic = builtin("logistic").unwrap();
    let r = logistic.reference_solution.unwrap();
    for (t, v) in r.times.unwrap().iter().zip(&r.values) {
        assert!((v[0] - 1.0 / (1.0 + (-t).exp())).abs() <= 1e-15);
    }
}

/// Independent integration of the predator–prey system by the 3/8-rule
/// Runge–Kutta method with step 2e-4.
fn lotka_volterra_oracle(tmax: f64) -> [f64; 2] {
    let f = |y: [f64; 2]| [0.5 * y[0] - 0.05 * y[0] * y[1], 0.02 * y[0] * y[1] - 0.5 * y[1]];
    let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
    let steps = (tmax / 2e-4).round() as usize;
    let h = tmax / steps as f64;
    let mut y = [20.0, 20.0];
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(add(y, k1, h / 3.0));
        let k3 = f([y[0] + h * (-k1[0] / 3.0 + k2[0]), y[1] + h * (-k1[1] / 3.0 + k2[1])]);
        let k4 = f([y[0] + h * (k1[0] - k2[0] + k3[0]), y[1] + h * (k1[1] - k2[1] + k3[1])]);
        y = [
            y[0] + h / 8.0 * (k1[0] + 3.0 * k2[0] + 3.0 * k3[0] + k4[0]),
            y[1] + h / 8.0 * (k1[1] + 3.0 * k2[1] + 3.0 * k3[1] + k4[1]),
        ];
    }
    y
}

#[test]
fn lotka_volterra_reference_matches_oracle() {
    let spec = builtin("lotka_volterra").unwrap();
    let r = spec.reference_solution.unwrap();
    assert_eq!(r.provenance, "oracle:rk-tight");
    let times = r.times.unwrap();
    let tmax = *times.last().unwrap();
    let oracle = lotka_volterra_oracle(tmax);
    let last = r.values.last().unwrap();
    for i in 0..2 {
        assert!(
            (last[i] - oracle[i]).abs() <= 1e-6 * oracle[i].abs(),
            "{last:?} vs {oracle:?}"
        );
    }
}

#[test]
fn builtins_round_trip_and_resolve() {
    let dir = std::env::temp_dir().join(format!("pnkit-problems-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for name in BUILTIN_NAMES {
        let spec = builtin(name).unwrap();
        let text = spec.to_json_string().unwrap();
        assert_eq!(ProblemSpec::from_json_str(&text).unwrap(), spec, "{name}");
        let path = dir.join(format!("{name}.json"));
        spec.save(&path).unwrap();
        assert_eq!(ProblemSpec::load(&path).unwrap(), spec, "{name}");
        spec.resolve().unwrap();
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn builtin_random_spd_arguments() {
    let spec = builtin("random_spd(n=12, seed=7, condition=30)").unwrap();
    assert_eq!(
        spec.linear_system_params().unwrap(),
        LinearSystemParams::RandomSpd {
            n: 12,
            condition: 30.0,
            seed: 7
        }
    );
    assert_eq!(spec.reference_solution.unwrap().values[0].len(), 12);
    assert!(builtin("random_spd(n=12, size=3)").is_err());
    assert!(builtin("random_spd(n=x)").is_err());
}

#[test]
fn unknown_builtin_lists_names() {
    match builtin("heat_equation") {
        Err(Error::Argument(msg)) => {
            assert!(msg.contains("heat_equation"));
            for name in BUILTIN_NAMES {
                assert!(msg.contains(name));
            }
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn truncated_document_reports_location() {
    let text = builtin("gauss_x2").unwrap().to_json_string().unwrap();
    match ProblemSpec::from_json_str(&text[..text.len() / 2]) {
        Err(Error::Parse(msg)) => assert!(msg.contains("line"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unknown_fields_are_named() {
    let mut value = serde_json::to_value(builtin("gauss_x2").unwrap()).unwrap();
    let params = value["parameters"].as_object_mut().unwrap();
    let dim = params.remove("dim").unwrap();
    params.insert("dmi".into(), dim);
    match ProblemSpec::from_json_str(&value.to_string()) {
        Err(Error::Parse(msg)) => assert!(msg.contains("dmi"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }

    let top = json!({"schema_version": 1, "kind": "ivp", "parameters": {}, "extra": 1});
    match ProblemSpec::from_json_str(&top.to_string()) {
        Err(Error::Parse(msg)) => assert!(msg.contains("extra"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn schema_version_checked() {
    let mut spec = builtin("linear_decay").unwrap();
    spec.schema_version = 2;
    let text = spec.to_json_string().unwrap();
    assert!(matches!(ProblemSpec::from_json_str(&text), Err(Error::Parse(_))));
}

#[test]
fn dense_specs_resolve() {
    let spec = ProblemSpec::new(
        ProblemKind::LinearSystem,
        json!({"type": "dense", "matrix": [[2.0, 1.0], [1.0, 3.0]], "rhs": [1.0, 2.0]}),
    );
    let resolved = spec.linear_system_params().unwrap().resolve().unwrap();
    assert_eq!(resolved.system.dim(), 2);
    let bad = ProblemSpec::new(
        ProblemKind::LinearSystem,
        json!({"type": "dense", "matrix": [[2.0, 1.0]], "rhs": [1.0, 2.0]}),
    );
    assert!(bad.resolve().is_err());

    let ivp = ProblemSpec::new(
        ProblemKind::Ivp,
        json!({"type": "linear", "matrix": [[0.0, 1.0], [-1.0, 0.0]], "y0": [1.0, 0.0], "t0": 0.0, "tmax": 1.0}),
    );
    match ivp.resolve().unwrap() {
        Problem::Ivp(ivp) => {
            let f = ivp.eval(&DVector::from_vec(vec![1.0, 0.0]), 0.0).unwrap();
            assert_eq!(f.as_slice(), &[0.0, -1.0]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn quad_spec_dimension_checks() {
    let mut params = builtin("gauss_x2").unwrap().quad_params().unwrap();
    params.dim = 2;
    assert!(params.resolve().is_err());
    let mut params = builtin("gauss_x2").unwrap().quad_params().unwrap();
    params.kernel.lengthscales = vec![1.0, 1.0];
    assert!(params.resolve().is_err());
}
