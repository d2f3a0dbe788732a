use serde::Serialize;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Machine-readable outcome of one command.
#[derive(Debug, Serialize)]
pub struct RunReport<T: Serialize> {
    pub schema_version: u32,
    pub command: Vec<String>,
    pub seed: u64,
    pub status: String,
    pub result: T,
    /// Seconds; the only field that varies between identical runs.
    pub wall_time_s: f64,
}

impl<T: Serialize> RunReport<T> {
    pub fn new(command: &[String], seed: u64, status: impl Into<String>, result: T, wall_time_s: f64) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            command: command.to_vec(),
            seed,
            status: status.into(),
            result,
            wall_time_s,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}
