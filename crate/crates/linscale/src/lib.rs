//! Datasets, configuration, parallel execution, result records and the
//! command line around `linscale-core`.

pub mod cli;
pub mod compare;
pub mod config;
pub mod data;
mod error;
pub mod exec;
pub mod record;

pub use error::{Error, Result};
