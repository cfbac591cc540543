//! File formats and command implementations behind the `mjls` binary.

pub mod commands;
pub mod files;
pub mod trace_csv;

pub use commands::{run, Cli, Outcome};
