//! Experiment harness behind the `mbq` binary: run files, seed fan-out, and
//! CSV artifacts.

pub mod commands;
pub mod error;
pub mod output;
pub mod runfile;
pub mod stats;

pub use commands::GlobalOptions;
pub use error::{exit, CliError};
pub use runfile::RunFile;
