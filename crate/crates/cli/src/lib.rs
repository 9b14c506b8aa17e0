//! Configuration parsing and subcommand drivers behind the `cotunnel` binary.

pub mod config;
pub mod plot;
pub mod run;

pub use config::{Config, ConfigError};
pub use run::{run, Command, Report, RunError};

/// The Tb2 dimer parameter set shipped with the binary.
pub const BUNDLED_TB2: &str = include_str!("../configs/tb2_paper.cfg");
