use std::io::Read;
use std::path::Path;

use pnkit::problems::{builtin, ProblemSpec, BUILTIN_NAMES};

use crate::CliError;

fn is_builtin(name: &str) -> bool {
    BUILTIN_NAMES.contains(&name) || name.starts_with("random_spd")
}

/// `-` reads stdin; an existing path is loaded; otherwise builtin names are
/// resolved.
pub fn load_problem(arg: &str, stdin: &mut dyn Read) -> Result<ProblemSpec, CliError> {
    if arg == "-" {
        return ProblemSpec::from_reader(stdin).map_err(|e| CliError::Failure(format!("<stdin>: {e}")));
    }
    if Path::new(arg).exists() {
        return Ok(ProblemSpec::load(arg)?);
    }
    if is_builtin(arg) {
        return Ok(builtin(arg)?);
    }
    Err(CliError::Failure(format!(
        "cannot read problem {arg}: no such file, and not a builtin ({})",
        BUILTIN_NAMES.join(", ")
    )))
}
