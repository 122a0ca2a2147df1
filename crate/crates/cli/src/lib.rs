//! Command-line front end: one subcommand per pipeline step plus
//! `pipeline all`, which chains them from a corpus manifest to a report.

pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod stamp;

pub use error::CliError;

/// Version recorded in every stage stamp.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
