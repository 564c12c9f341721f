//! File formats, the experiment runner and the command line for
//! `lieprobe-core`.

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod reports;
pub mod runner;
pub mod settings;
pub mod svg;

pub use error::{Error, Result};
