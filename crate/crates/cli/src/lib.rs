//! Library surface of the command-line tool: binary file formats, run
//! configuration, the benchmark harness and the method-comparison
//! machinery. The `blast` binary is a thin dispatcher over these modules.

pub mod bench;
pub mod config;
pub mod error;
pub mod formats;
pub mod harness;

pub use error::CliError;
