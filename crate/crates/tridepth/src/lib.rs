//! Files, checkpoints and the command-line pipeline around `tridepth-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod images;
pub mod pfm;
pub mod report;
pub mod run;
pub mod tools;

pub use error::{Error, Result};
