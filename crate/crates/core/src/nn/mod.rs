//! Minimal reverse-mode neural network engine: the VGG-style layer set,
//! losses and the Adadelta optimizer.

mod activation;
mod conv;
mod dense;
mod dropout;
mod layer;
mod loss;
mod network;
mod optim;
mod pool;

pub use activation::{relu, softmax};
pub use conv::{conv2d_forward, conv_output_dim};
pub use dense::dense_forward;
pub use dropout::dropout_forward;
pub use layer::{Conv2d, Dense, Dropout, Layer, LayerKind, MaxPool2d};
pub use loss::{batch_loss, loss, loss_grad, LossKind, BCE_EPSILON};
pub use network::{Mode, Network, ParamGrad};
pub use optim::{adadelta_step, Adadelta, AdadeltaConfig, AdadeltaState};
pub use pool::{maxpool_forward, PoolOutput};

use crate::tensor::ShapeMismatch;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape error in {layer}: {detail}")]
    Shape { layer: String, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("backward called without a preceding training forward pass")]
    NoForwardPass,
    #[error(transparent)]
    Tensor(#[from] ShapeMismatch),
}

impl NnError {
    pub(crate) fn shape(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        NnError::Shape {
            layer: layer.into(),
            detail: detail.into(),
        }
    }
}
