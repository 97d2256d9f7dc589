//! Core of a differentiable manifold-reconstruction point cloud denoiser.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation: a small reverse-mode autodiff engine, geometry kernels,
//! the encoder (dynamic graph convolutions plus differentiable pooling), the
//! patch-manifold decoder, the training losses, toy data generation and
//! K-means patching. File formats, checkpoints and the CLI live in the
//! `pcdenoise` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod data;
pub mod decoder;
pub mod encoder;
mod error;
pub mod geometry;
pub mod losses;
pub mod math;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use geometry::{PointCloud, TriangleMesh};
pub use model::{DenoiserModel, ModelConfig};
pub use tensor::{Gradients, Tape, Tensor, Var};
