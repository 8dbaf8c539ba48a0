//! Core of the `nvv` volumetric video codec.
//!
//! Every frame of a dynamic scene is modeled as a radiance field whose
//! features are the Hadamard product of a single-scale coefficient grid and
//! a multi-scale, periodically indexed basis pyramid, decoded to color and
//! density by a tiny MLP. Inside a group of frames the basis is carried over
//! from the decoded previous frame and only a sparse residual plus a fresh
//! coefficient grid are transmitted. Training uses simulated quantization
//! and a Laplace rate estimate; the bitstream is produced by a range coder
//! driven by the very same Laplace models.
//!
//! The crate is `no_std` (it needs `alloc`). File IO, dataset handling and
//! the command line live in the `nvv` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod codec;
pub mod error;
pub mod eval;
pub mod grid;
pub mod math;
pub mod mlp;
pub mod model;
pub mod optim;
pub mod rate;
pub mod render;
pub mod rng;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use math::Vec3;
