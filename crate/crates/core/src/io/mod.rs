//! File formats and the command line front end.

pub mod cli;
pub mod config;
pub mod output;

pub use config::{GeometryConfig, RunConfig};
