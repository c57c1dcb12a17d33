//! Super-resolution by fused expert look-up tables.
//!
//! Compressed 4D LUTs ([`lut`]) are queried with a branch-free order-table
//! tetrahedral interpolation ([`interp`]). A bank of expert LUTs is blended
//! per pixel with weights from a small convolutional predictor ([`fusion`])
//! and refined by a lightweight temporal branch ([`temporal`]). Building
//! banks, simulating degraded streams, training and benchmarking live in
//! their own crates on top of this one.
//!
//! The numeric code in [`nnet`], [`fusion`], [`temporal`] and [`model`] is
//! generic over the scalar type; the aliases below pin the single-precision
//! instantiation used by the pipelines. Gradient checks run the same code in
//! `f64`.

// `!(x > 0)` is the NaN-rejecting form used throughout for argument checks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod error;
pub mod fusion;
pub mod interp;
pub mod lut;
pub mod metrics;
pub mod model;
pub mod nnet;
pub mod plane;
mod real;
pub mod temporal;

pub use error::{Error, Result};
pub use real::Real;

pub use interp::{OrderTable, SimplexWeights};
pub use lut::{ExpertBank, LutTable};
pub use plane::{Frame, Plane};

/// Single-precision activation tensor.
pub type Tensor = nnet::Tensor4<f32>;
/// Single-precision convolution network.
pub type Net = nnet::Net<f32>;
/// Single-precision per-pixel fusion weights.
pub type WeightMap = fusion::WeightMap<f32>;
/// Single-precision predictor + temporal model.
pub type Model = model::ConvLut<f32>;
