//! Core algorithms for quantization-aware visual token pruning.
//!
//! The crate is `no_std` (it needs `alloc`) and contains no IO. It provides:
//!
//! - [`numerics`]: row-major [`Matrix`], normalized Sylvester [`HadamardMatrix`]
//!   and a seeded, platform-stable [`Rng`]
//! - [`quant`]: symmetric uniform fake quantization at per-tensor, per-token
//!   and per-channel granularity
//! - [`attention`]: the single-head query-to-visual attention vector under
//!   full-precision, naive-quantized and Hadamard-rotated regimes
//! - [`pruner`]: top-k preservation, camera-projected robot ring, farthest
//!   point sampling and the exact-budget union of the three
//! - [`efficiency`]: bit-operation accounting for the transformer prefill
//!
//! [`Matrix`]: numerics::Matrix
//! [`HadamardMatrix`]: numerics::HadamardMatrix
//! [`Rng`]: numerics::Rng

#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;

pub mod attention;
pub mod efficiency;
pub mod numerics;
pub mod pruner;
pub mod quant;

pub use error::{Error, Result};
