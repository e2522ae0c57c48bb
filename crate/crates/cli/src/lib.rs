//! Command-line driver: configuration, presets, subcommands and run records.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod presets;

pub use config::Config;
pub use error::{CliError, Result};
