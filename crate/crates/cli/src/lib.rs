//! Command-line surface of the trustrep engine: configuration, subcommands
//! and report files.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigError, Format, RunConfig, Variant};
pub use run::{run, Command, Flags, ReportBundle, RunError};
