use serde::{Deserialize, Serialize};

use crate::data::{standardize, zero_center, StandardizationStats};
use crate::nn::{AdadeltaConfig, LossKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{AgeLoss, TrainError};

/// Pixel normalisation applied before images enter a network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    #[default]
    Standardize,
    ZeroCenter,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Epochs per serial chunk.
    pub epochs: usize,
    pub serial_splits: usize,
    pub val_sample_size: usize,
    pub gender_loss: LossKind,
    pub age_loss: AgeLoss,
    pub seed: u64,
    pub augment: bool,
    pub crop_width: usize,
    pub crop_height: usize,
    pub input_mode: InputMode,
    pub optimizer: AdadeltaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 50,
            epochs: 60,
            serial_splits: 1,
            val_sample_size: 500,
            gender_loss: LossKind::BinaryCrossEntropy,
            age_loss: AgeLoss::DistributionMae,
            seed: 0,
            augment: false,
            crop_width: 48,
            crop_height: 48,
            input_mode: InputMode::Standardize,
            optimizer: AdadeltaConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.epochs == 0 || self.serial_splits == 0 {
            return Err(TrainError::Config(
                "batch_size, epochs and serial_splits must all be at least 1".into(),
            ));
        }
        if self.val_sample_size == 0 {
            return Err(TrainError::Config("val_sample_size must be at least 1".into()));
        }
        self.optimizer.validate()?;
        Ok(())
    }
}

/// Normalisation together with the training-set statistics it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    pub mode: InputMode,
    pub stats: Option<StandardizationStats>,
}

impl Preprocess {
    pub const RAW: Preprocess = Preprocess {
        mode: InputMode::Raw,
        stats: None,
    };

    pub fn apply<T: Scalar>(&self, img: &Tensor<T>) -> Tensor<T> {
        match (self.mode, &self.stats) {
            (InputMode::Standardize, Some(s)) => standardize(img, s),
            (InputMode::ZeroCenter, Some(s)) => zero_center(img, s.mean),
            _ => img.clone(),
        }
    }

    /// Provenance entries recorded in checkpoints.
    pub fn to_provenance(&self) -> Vec<(String, String)> {
        let mode = match self.mode {
            InputMode::Standardize => "standardize",
            InputMode::ZeroCenter => "zero_center",
            InputMode::Raw => "raw",
        };
        let mut v = vec![("input_mode".to_string(), mode.to_string())];
        if let Some(s) = self.stats {
            v.push(("pixel_mean".into(), s.mean.to_string()));
            v.push(("pixel_std".into(), s.std.to_string()));
        }
        v
    }

    pub fn from_provenance(p: &std::collections::BTreeMap<String, String>) -> Result<Self, TrainError> {
        let mode = match p.get("input_mode").map(String::as_str) {
            None | Some("raw") => InputMode::Raw,
            Some("standardize") => InputMode::Standardize,
            Some("zero_center") => InputMode::ZeroCenter,
            Some(other) => return Err(TrainError::Config(format!("unknown input_mode {other:?}"))),
        };
        let num = |k: &str| -> Result<Option<f64>, TrainError> {
            p.get(k)
                .map(|v| v.parse().map_err(|_| TrainError::Config(format!("bad {k} {v:?}"))))
                .transpose()
        };
        let stats = match (num("pixel_mean")?, num("pixel_std")?) {
            (Some(mean), Some(std)) => Some(StandardizationStats { mean, std }),
            _ => None,
        };
        if mode != InputMode::Raw && stats.is_none() {
            return Err(TrainError::Config("checkpoint lacks pixel statistics".into()));
        }
        Ok(Preprocess { mode, stats })
    }
}
