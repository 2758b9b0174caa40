//! Convolutional age and gender estimation: a small CNN engine, image and
//! label tooling, label-distribution age encoding, transfer-learning model
//! surgery, the training protocol and a synthetic benchmark.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the working precision to `f32`.

pub mod cli;
pub mod config;
pub mod data;
pub mod encoding;
pub mod linalg;
pub mod nn;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod zoo;

pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Network32 = nn::Network<f32>;
pub type Model32 = zoo::Model<f32>;
pub type Example32 = train::Example<f32>;
pub type HierarchyModel32 = train::HierarchyModel<f32>;
