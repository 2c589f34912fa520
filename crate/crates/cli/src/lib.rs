//! Experiment runner for `lbmpc-core`: TOML configs, bundled systems,
//! convergence studies and the `lbmpc` command-line tool.

pub mod catalog;
pub mod commands;
pub mod config;
pub mod experiments;
pub mod io;

pub use commands::{run, Cli};
pub use config::Config;
