//! File formats, run configuration and subcommands for the `cascade`
//! binary. The decision logic itself lives in `cascade-core`.

pub mod commands;
pub mod config;
pub mod io;
pub mod report;

pub use config::{RunConfig, UsageError};
