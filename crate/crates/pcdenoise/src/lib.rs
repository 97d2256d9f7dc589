//! Training, denoising and evaluation on top of `pcdenoise-core`, plus
//! mesh and point cloud file formats and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::Config;
pub use error::{PipelineError, Result};

#[cfg(test)]
mod test_support;
