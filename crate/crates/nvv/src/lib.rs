//! File formats, datasets, configuration and pipelines around `nvv-core`.

pub mod config;
pub mod curves;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod ppm;

pub use error::{Error, Result};
