//! Command-line front end for the `pnkit` solvers.
//!
//! Every command prints a JSON [`report::RunReport`] (or writes it to
//! `--out`). Exit codes: 0 success, 1 runtime or numerical failure,
//! 2 non-convergence, 3 benchmark gate failure, 64 usage error.

pub mod args;
pub mod bench;
mod input;
pub mod linsolve;
pub mod odesolve;
pub mod quad;
pub mod report;

use std::fmt;
use std::io::Read;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::Cli;
use args::Command;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_GATE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(msg) | Self::Failure(msg) => f.write_str(msg),
        }
    }
}

impl From<pnkit::Error> for CliError {
    fn from(e: pnkit::Error) -> Self {
        Self::Failure(e.to_string())
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Failure(_) => EXIT_FAILURE,
        }
    }
}

/// What a command produced.
#[derive(Debug)]
pub struct Done {
    pub code: i32,
    /// Serialized report, written to `out` or stdout.
    pub report: String,
    pub out: Option<PathBuf>,
    /// Additional stdout text (the benchmark summary table).
    pub stdout: String,
    pub stderr: String,
}

/// Exit code and the text destined for stdout and stderr.
#[derive(Debug, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the command line `argv` (including the program name).
pub fn run(argv: &[String], stdin: &mut dyn Read) -> Outcome {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Outcome {
                    code: EXIT_OK,
                    stdout: text,
                    stderr: String::new(),
                },
                _ => Outcome {
                    code: EXIT_USAGE,
                    stdout: String::new(),
                    stderr: text,
                },
            };
        }
    };
    let echo: Vec<String> = argv.iter().skip(1).cloned().collect();
    let result = match &cli.command {
        Command::Linsolve(a) => linsolve::run(a, &echo, stdin),
        Command::Odesolve(a) => odesolve::run(a, &echo, stdin),
        Command::Quad(a) => quad::run(a, &echo, stdin),
        Command::Bench(a) => bench::run(a, &echo),
    };
    match result {
        Ok(done) => finish(done),
        Err(e) => Outcome {
            code: e.code(),
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}

fn finish(done: Done) -> Outcome {
    let mut outcome = Outcome {
        code: done.code,
        stdout: done.stdout,
        stderr: done.stderr,
    };
    match &done.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &done.report) {
                outcome.code = EXIT_FAILURE;
                outcome
                    .stderr
                    .push_str(&format!("error: cannot write {}: {e}\n", path.display()));
            }
        }
        None => outcome.stdout.insert_str(0, &done.report),
    }
    outcome
}
