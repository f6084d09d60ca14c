//! File formats, configuration, sweeps and the command-line driver for
//! [`zsda_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod heads;
mod lines;
pub mod report;
pub mod sweep;

pub use error::{Error, Result};
