//! Scenario files, command execution and file output for the chemostat
//! toolkit.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

pub use commands::{execute, Command, Outcome, RunContext};
pub use error::{CliError, ErrorKind, ErrorRecord};
pub use scenario::{parse_scenario, Model, Parsed, Scenario, ScenarioError, FORMAT_VERSION};
