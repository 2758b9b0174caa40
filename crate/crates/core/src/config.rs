//! Run configuration: one TOML document covering every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{AgeRange, SubsetConfig};
use crate::encoding::{AgeEncoding, Decoder, MAX_AGE, MIN_AGE};
use crate::synth::SyntheticSpec;
use crate::train::{ArchConfig, SweepAxis, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config field {0} is required for this command")]
    Missing(&'static str),
}

/// Label manifests and where their images live. Relative paths are
/// resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Manifest for clean, subset, stats and augment.
    pub labels: Option<PathBuf>,
    pub overrides: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Base for image paths; defaults to each manifest's directory.
    pub image_root: Option<PathBuf>,
    pub ages: AgeRange,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub arch: ArchConfig,
    /// Checkpoint whose backbone seeds the new model.
    pub pretrained: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub decoder: Decoder,
    pub checkpoint: Option<PathBuf>,
    pub gender_checkpoint: Option<PathBuf>,
    pub male_checkpoint: Option<PathBuf>,
    pub female_checkpoint: Option<PathBuf>,
    /// Single age model compared against the hierarchy.
    pub single_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodeConfig {
    pub ages: Vec<u32>,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            ages: (MIN_AGE..=MAX_AGE).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub axis: Option<SweepAxis>,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub subset: SubsetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub encoding: AgeEncoding,
    pub eval: EvalConfig,
    pub encode: EncodeConfig,
    pub synth: SyntheticSpec,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("agelab-out"),
            data: DataConfig::default(),
            subset: SubsetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            encoding: AgeEncoding::default(),
            eval: EvalConfig::default(),
            encode: EncodeConfig::default(),
            synth: SyntheticSpec::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads `path` and makes every relative path in it relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        let d = &mut self.data;
        let e = &mut self.eval;
        for p in [
            &mut d.labels,
            &mut d.overrides,
            &mut d.train,
            &mut d.validation,
            &mut d.test,
            &mut d.image_root,
            &mut self.model.pretrained,
            &mut e.checkpoint,
            &mut e.gender_checkpoint,
            &mut e.male_checkpoint,
            &mut e.female_checkpoint,
            &mut e.single_checkpoint,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// The single seed override reaches every seeded component.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.model.arch.init_seed = seed;
        self.synth.seed = seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}

pub fn required<'a, T>(value: &'a Option<T>, name: &'static str) -> Result<&'a T, ConfigError> {
    value.as_ref().ok_or(ConfigError::Missing(name))
}
