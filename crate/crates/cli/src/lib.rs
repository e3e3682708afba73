//! Command-line front end for the `degenlab` solvers: configuration
//! parsing, run dispatch, and artifact manifests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod manifest;
pub mod run;

pub use config::{parse_config, parse_config_str, RunConfig};
pub use error::CliError;
pub use run::{execute, Command, RunOutcome, RunRequest};
