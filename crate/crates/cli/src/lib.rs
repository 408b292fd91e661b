//! Command-line front end: loads an analysis set, computes similarity
//! profiles, association tests and bias-transfer scores, and writes JSON/CSV.

pub mod commands;
pub mod error;
pub mod output;
pub mod pipeline;

pub use commands::{run, Cli};
pub use error::CliError;
