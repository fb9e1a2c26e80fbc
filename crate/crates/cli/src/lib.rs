//! Command-line pipeline for spatial Durbin panel estimation: simulate data,
//! select the neighbour count, fit, and report impacts and diagnostics.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;

pub use config::{ReportFormat, RunConfig};
pub use error::{CliError, CliResult};
