//! Command-line front end: configuration loading, subcommands and exports.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
