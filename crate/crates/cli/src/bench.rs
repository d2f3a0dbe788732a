//! Benchmark suites: fixed problems with tolerance gates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use pnkit::problems::builtin;
use serde::Serialize;

use crate::args::{BaseMethod, BenchArgs, OdeMethod};
use crate::linsolve::{self, LinsolveOptions};
use crate::odesolve::{self, OdeOptions};
use crate::quad::{self, NodeSource, QuadOptions};
use crate::report::RunReport;
use crate::{CliError, Done, EXIT_GATE, EXIT_OK};

pub const SUITES: &[&str] = &["smoke"];

/// Which number a row is gated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Error,
    /// `|error| / reported std`.
    CalibrationZ,
}

impl Gate {
    fn name(self) -> &'static str {
        match self {
            Self::Error => "error",
            Self::CalibrationZ => "calibration_z",
        }
    }
}

struct RowSpec {
    name: &'static str,
    method: &'static str,
    gate: Gate,
    tolerance: f64,
    seed: u64,
    run: fn(u64) -> Result<Measured, CliError>,
}

struct Measured {
    error: f64,
    std: Option<f64>,
    result: serde_json::Value,
}

/// One line of the summary table.
#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub problem: String,
    pub method: String,
    pub error: f64,
    pub calibration_z: Option<f64>,
    pub gate: Gate,
    pub tolerance: f64,
    pub runtime_s: f64,
    pub pass: bool,
}

fn json(value: impl Serialize) -> serde_json::Value {
    serde_json::to_value(value).expect("results serialize")
}

fn missing(what: &str) -> CliError {
    CliError::Failure(format!("{what}: no reference to compare against"))
}

fn ode_row(name: &str, options: OdeOptions) -> Result<Measured, CliError> {
    let result = odesolve::solve(&builtin(name)?, &options)?;
    let last = result.evaluations.last().ok_or_else(|| missing(name))?;
    let error = result.max_error.ok_or_else(|| missing(name))?;
    let std = last.std.iter().copied().fold(0.0, f64::max);
    Ok(Measured {
        error,
        std: Some(std),
        result: json(&result),
    })
}

fn quad_row(name: &str, n: usize, seed: u64) -> Result<Measured, CliError> {
    let options = QuadOptions {
        nodes: NodeSource::Sample(n),
        seed: Some(seed),
        optimize_lengthscale: false,
    };
    let (result, _) = quad::solve(&builtin(name)?, &options)?;
    Ok(Measured {
        error: result.error.ok_or_else(|| missing(name))?,
        std: Some(result.std),
        result: json(&result),
    })
}

fn smoke() -> Vec<RowSpec> {
    vec![
        RowSpec {
            name: "linsolve_random_spd",
            method: "problinsolve",
            gate: Gate::Error,
            tolerance: 1e-6,
            seed: 1,
            run: |seed| {
                let spec = builtin(&format!("random_spd(n=20,condition=100,seed={seed})"))?;
                let result = linsolve::solve(&spec, LinsolveOptions::default())?;
                let std = result.std.iter().copied().fold(0.0, f64::max);
                Ok(Measured {
                    error: result.reference_error.ok_or_else(|| missing("random_spd"))?,
                    std: Some(std),
                    result: json(&result),
                })
            },
        },
        RowSpec {
            name: "odesolve_linear_decay_ek1",
            method: "ek1",
            gate: Gate::Error,
            tolerance: 1e-5,
            seed: 0,
            run: |_| {
                let options = OdeOptions {
                    rtol: Some(1e-8),
                    eval: Some(vec![1.0]),
                    ..OdeOptions::default()
                };
                ode_row("linear_decay", options)
            },
        },
        RowSpec {
            name: "odesolve_logistic_ek1",
            method: "ek1",
            gate: Gate::Error,
            tolerance: 1e-4,
            seed: 0,
            run: |_| {
                let options = OdeOptions {
                    rtol: Some(1e-6),
                    ..OdeOptions::default()
                };
                ode_row("logistic", options)
            },
        },
        RowSpec {
            name: "odesolve_lotka_volterra_ek1",
            method: "ek1",
            gate: Gate::Error,
            tolerance: 1e-2,
            seed: 0,
            run: |_| {
                let options = OdeOptions {
                    rtol: Some(1e-6),
                    atol: Some(1e-8),
                    ..OdeOptions::default()
                };
                ode_row("lotka_volterra", options)
            },
        },
        RowSpec {
            name: "odesolve_linear_decay_perturbed",
            method: "perturbed_rk4",
            gate: Gate::CalibrationZ,
            tolerance: 3.0,
            seed: 7,
            run: |seed| {
                let options = OdeOptions {
                    method: OdeMethod::Perturbed,
                    base: BaseMethod::Rk4,
                    grid: Some(0.05),
                    scale: 1.0,
                    ensemble_size: 100,
                    seed,
                    eval: Some(vec![1.0]),
                    ..OdeOptions::default()
                };
                let mut measured = ode_row("linear_decay", options)?;
                // gate on the standard error of the ensemble mean
                measured.std = measured.std.map(|s| s / 10.0);
                Ok(measured)
            },
        },
        RowSpec {
            name: "quad_gauss_x2",
            method: "bmc",
            gate: Gate::Error,
            tolerance: 5e-2,
            seed: 1,
            run: |seed| quad_row("gauss_x2", 50, seed),
        },
        RowSpec {
            name: "quad_genz_oscillatory_1d",
            method: "bmc",
            gate: Gate::Error,
            tolerance: 1e-3,
            seed: 0,
            run: |seed| quad_row("genz_oscillatory_1d", 30, seed),
        },
    ]
}

fn suite(name: &str) -> Result<Vec<RowSpec>, CliError> {
    match name.trim() {
        "" => Err(CliError::Usage("empty suite name".into())),
        "smoke" => Ok(smoke()),
        other => Err(CliError::Usage(format!(
            "unknown suite {other:?}; known: {}",
            SUITES.join(", ")
        ))),
    }
}

fn read_tolerances(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Failure(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: expected an object of row tolerances: {e}", path.display())))
}

pub fn summary_csv(rows: &[Row]) -> String {
    let mut out = String::from("problem,method,error,calibration_z,gate,tolerance,runtime_s,pass\n");
    for r in rows {
        let z = r.calibration_z.map(|z| format!("{z:e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{:e},{},{},{:e},{:.3},{}",
            r.problem,
            r.method,
            r.error,
            z,
            r.gate.name(),
            r.tolerance,
            r.runtime_s,
            r.pass
        );
    }
    out
}

#[derive(Debug, Serialize)]
struct BenchSummary {
    suite: String,
    rows: Vec<Row>,
    failing: Vec<String>,
}

pub fn run(args: &BenchArgs, echo: &[String]) -> Result<Done, CliError> {
    let start = Instant::now();
    let mut specs = suite(&args.suite)?;
    if let Some(path) = &args.tolerances {
        for (name, tol) in read_tolerances(path)? {
            let row = specs
                .iter_mut()
                .find(|r| r.name == name)
                .ok_or_else(|| CliError::Usage(format!("tolerance for unknown row {name:?}")))?;
            row.tolerance = tol;
        }
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Failure(format!("cannot create {}: {e}", dir.display())))?;
    }

    let mut rows = Vec::new();
    let mut stderr = String::new();
    for spec in &specs {
        let row_start = Instant::now();
        let measured = (spec.run)(spec.seed);
        let runtime_s = row_start.elapsed().as_secs_f64();
        let (row, report) = match measured {
            Ok(m) => {
                let z = m.std.filter(|s| *s > 0.0).map(|s| m.error / s);
                let value = match spec.gate {
                    Gate::Error => Some(m.error),
                    Gate::CalibrationZ => z,
                };
                let pass = value.is_some_and(|v| v <= spec.tolerance);
                let status = if pass { "pass" } else { "fail" };
                let row = Row {
                    problem: spec.name.into(),
                    method: spec.method.into(),
                    error: m.error,
                    calibration_z: z,
                    gate: spec.gate,
                    tolerance: spec.tolerance,
                    runtime_s,
                    pass,
                };
                (
                    row,
                    RunReport::new(&[spec.name.to_string()], spec.seed, status, m.result, runtime_s),
                )
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: {}: {e}", spec.name);
                let row = Row {
                    problem: spec.name.into(),
                    method: spec.method.into(),
                    error: f64::NAN,
                    calibration_z: None,
                    gate: spec.gate,
                    tolerance: spec.tolerance,
                    runtime_s,
                    pass: false,
                };
                let result = serde_json::json!({ "error": e.to_string() });
                (
                    row,
                    RunReport::new(&[spec.name.to_string()], spec.seed, "error", result, runtime_s),
                )
            }
        };
        if let Some(dir) = &args.out {
            let path = dir.join(format!("{}.json", spec.name));
            std::fs::write(&path, report.to_json())
                .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))?;
        }
        rows.push(row);
    }

    let csv = summary_csv(&rows);
    if let Some(dir) = &args.out {
        let path = dir.join("summary.csv");
        std::fs::write(&path, &csv).map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))?;
    }
    let failing: Vec<String> = rows.iter().filter(|r| !r.pass).map(|r| r.problem.clone()).collect();
    let code = if failing.is_empty() {
        EXIT_OK
    } else {
        let _ = writeln!(stderr, "gate failed: {}", failing.join(", "));
        EXIT_GATE
    };
    let status = if failing.is_empty() { "pass" } else { "fail" };
    let summary = BenchSummary {
        suite: args.suite.clone(),
        rows,
        failing,
    };
    let report = RunReport::new(echo, 0, status, summary, start.elapsed().as_secs_f64());
    // the report goes to <out>/report.json; stdout carries the table
    let out = args.out.as_ref().map(|d| d.join("report.json"));
    Ok(Done {
        code,
        report: if out.is_some() { report.to_json() } else { String::new() },
        out,
        stdout: csv,
        stderr,
    })
}
