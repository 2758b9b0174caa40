//! Model construction, transfer-learning surgery and checkpoints.

mod build;
mod checkpoint;
mod init;

pub use build::{build_backbone, replace_top, Head, Model, StackSpec};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_into, save_checkpoint,
};
pub use init::{glorot_bound, init_layer, init_random};

use std::path::PathBuf;

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("backbone too deep for input: {0}")]
    Depth(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("checkpoint does not match architecture at {layer}: {detail}")]
    Mismatch { layer: String, detail: String },
}
