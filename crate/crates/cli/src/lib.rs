//! Configuration-driven runs of the boundary-feedback pipeline: spectrum,
//! synthesis, simulation and the verification battery.

pub mod app;
pub mod config;
pub mod error;
pub mod output;
pub mod scenario;
pub mod verify;

pub use error::{CliError, CliResult};
