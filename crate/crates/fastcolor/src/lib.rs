//! File formats, configuration, checkpoints and the training pipeline on top
//! of `fastcolor-core`.

pub mod checkpoint;
pub mod config;
mod error;
pub mod io;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod run;

pub use error::{Error, Result};
