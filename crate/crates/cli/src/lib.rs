//! Command-line frontend for `abdux`: run configuration, self-validating
//! reports, mask rendering and the subcommands behind the `abdux` binary.

pub mod commands;
pub mod config;
pub mod exit;
pub mod render;
pub mod report;

pub use config::RunConfig;
pub use exit::{CliError, CliResult, Status};
pub use report::Report;
