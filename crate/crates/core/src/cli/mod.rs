//! Config parsing and scenario runs behind the `mfg-pricing` binary.

mod config;
mod runner;

pub use config::{parse_config, ScenarioConfig, ScenarioKind};
pub use runner::{run_scenario, write_solution, RunSummary};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_UNSTABLE: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidParams(_) | Error::InvalidSettings(_) => EXIT_CONFIG,
        Error::Unstable { .. } => EXIT_UNSTABLE,
        _ => EXIT_FAILURE,
    }
}
