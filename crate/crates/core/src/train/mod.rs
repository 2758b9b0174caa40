//! Training protocol, evaluation metrics, sweeps and the gender-routed age
//! hierarchy.

mod config;
mod eval;
mod example;
mod experiment;
mod hierarchy;
mod log;
mod looping;
mod sweep;

pub use config::{InputMode, Preprocess, TrainConfig};
pub use eval::{
    age_loss, evaluate_age, evaluate_age_both, evaluate_gender, predict_all, AgeLoss, AgeMetrics,
    Metrics, Predictor,
};
pub use example::{target_for, Example};
pub use experiment::{
    build_model, prepare_examples, run_experiment, ArchConfig, DataSplits, ExperimentConfig,
    RunResult,
};
pub use hierarchy::{evaluate_hierarchy, predict_age_hierarchical, HierarchyModel, HierarchyReport};
pub use log::{EpochRecord, TrainLog};
pub use looping::{train, TrainOutcome};
pub use sweep::{sweep, SweepAxis, SweepRow, SweepTable};

use crate::data::DataError;
use crate::encoding::EncodingError;
use crate::nn::NnError;
use crate::zoo::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error("empty evaluation set")]
    EmptySet,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}
