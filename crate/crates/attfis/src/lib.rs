//! Simulation harness for `attfis-core`: TOML configuration, artifact file
//! formats, a parallel Monte Carlo driver and the `attfis` command line.

pub mod bundle;
pub mod cli;
pub mod config;
mod csvfmt;
pub mod dataset;
pub mod error;
pub mod gains;
mod io;
pub mod model;
pub mod montecarlo;
pub mod record;
pub mod report;

pub use attfis_core as core;
pub use error::{Error, Result};
