//! Deterministic federated-learning simulator for automatic modulation
//! classification.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the precision used by the experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod experiments;
pub mod fl;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod signal;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Frame = signal::SignalFrame<f32>;
pub type Frame64 = signal::SignalFrame<f64>;
pub type Dataset = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type Model = nn::ModelParams<f32>;
pub type Model64 = nn::ModelParams<f64>;
pub type Tensor = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
