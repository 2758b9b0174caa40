use serde::{Deserialize, Serialize};

use crate::data::{compute_standardization_stats, resize_bilinear, twelve_crop_sample, ImageSample};
use crate::encoding::AgeEncoding;
use crate::scalar::Scalar;
use crate::zoo::{build_backbone, init_random, replace_top, Head, Model, StackSpec};

use super::eval::{evaluate_age_both, evaluate_gender};
use super::{train, Example, InputMode, Metrics, Preprocess, TrainConfig, TrainError, TrainOutcome};

/// Backbone plus replaced top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub stacks: Vec<StackSpec>,
    pub dense: Vec<usize>,
    pub dropout: f64,
    pub head: Head,
    pub freeze_backbone: bool,
    pub init_seed: u64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            channels: 1,
            height: 64,
            width: 64,
            stacks: vec![StackSpec::new(8, 1), StackSpec::new(16, 1)],
            dense: vec![512, 512],
            dropout: 0.5,
            head: Head::Gender,
            freeze_backbone: false,
            init_seed: 0,
        }
    }
}

impl ArchConfig {
    pub fn input_shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub encoding: AgeEncoding,
}

/// Raw-pixel samples for one run. `val_source` feeds checkpoint selection,
/// `test` the reported metrics.
#[derive(Debug, Clone, Default)]
pub struct DataSplits<T = f32> {
    pub train: Vec<ImageSample<T>>,
    pub val_source: Vec<ImageSample<T>>,
    pub test: Vec<ImageSample<T>>,
}

#[derive(Debug, Clone)]
pub struct RunResult<T = f32> {
    pub outcome: TrainOutcome<T>,
    pub preprocess: Preprocess,
    /// Held-out metrics; `None` when the test split is empty.
    pub best_metrics: Option<Metrics>,
    pub final_metrics: Option<Metrics>,
}

/// Fresh model, or `pretrained`'s backbone under a new top. Only layers
/// without weights yet are initialised from `arch.init_seed`.
pub fn build_model<T: Scalar>(arch: &ArchConfig, pretrained: Option<&Model<T>>) -> Result<Model<T>, TrainError> {
    let backbone = match pretrained {
        Some(m) => {
            if m.network.input_shape() != arch.input_shape() {
                return Err(TrainError::Config(format!(
                    "pretrained input {:?} differs from configured {:?}",
                    m.network.input_shape(),
                    arch.input_shape()
                )));
            }
            m.backbone()
        }
        None => build_backbone(arch.input_shape(), &arch.stacks)?,
    };
    let mut model = replace_top(&backbone, &arch.dense, arch.dropout, arch.head)?;
    init_random(&mut model, arch.init_seed, pretrained.is_some());
    if arch.freeze_backbone {
        model.freeze_backbone();
    }
    model.provenance.insert("init_seed".into(), arch.init_seed.to_string());
    model
        .provenance
        .insert("pretrained_backbone".into(), pretrained.is_some().to_string());
    Ok(model)
}

fn fit<T: Scalar>(s: &ImageSample<T>, h: usize, w: usize) -> ImageSample<T> {
    let shape = s.pixels.shape();
    if shape[1] == h && shape[2] == w {
        s.clone()
    } else {
        ImageSample {
            pixels: resize_bilinear(&s.pixels, h, w),
            label: s.label.clone(),
        }
    }
}

/// Resizes to `size` when needed, normalises, and attaches targets.
pub fn prepare_examples<T: Scalar>(
    samples: &[ImageSample<T>],
    preprocess: &Preprocess,
    head: Head,
    encoding: &AgeEncoding,
    size: (usize, usize),
) -> Result<Vec<Example<T>>, TrainError> {
    samples
        .iter()
        .map(|s| {
            let mut s = fit(s, size.0, size.1);
            s.pixels = preprocess.apply(&s.pixels);
            Example::from_sample(s, head, encoding)
        })
        .collect()
}

fn metrics<T: Scalar>(model: &Model<T>, test: &[Example<T>]) -> Result<Metrics, TrainError> {
    Ok(match model.head {
        Head::Gender => Metrics::Gender {
            accuracy: evaluate_gender(model, test)?,
        },
        Head::Age => Metrics::Age(evaluate_age_both(model, test)?),
    })
}

/// One full train-and-evaluate run. Pixel statistics come from the
/// un-augmented training images; with augmentation on, the model input
/// must equal the crop size and held-out images are resized to it.
pub fn run_experiment<T: Scalar>(
    config: &ExperimentConfig,
    data: &DataSplits<T>,
    pretrained: Option<&Model<T>>,
) -> Result<RunResult<T>, TrainError> {
    let arch = &config.arch;
    let tc = &config.train;
    if tc.augment && (tc.crop_height, tc.crop_width) != (arch.height, arch.width) {
        return Err(TrainError::Config(format!(
            "augmentation crops {}x{} but the model takes {}x{}",
            tc.crop_width, tc.crop_height, arch.width, arch.height
        )));
    }
    let preprocess = match tc.input_mode {
        InputMode::Raw => Preprocess::RAW,
        mode => Preprocess {
            mode,
            stats: Some(compute_standardization_stats(data.train.iter().map(|s| &s.pixels))?),
        },
    };
    let size = (arch.height, arch.width);
    let train_samples: Vec<ImageSample<T>> = if tc.augment {
        let mut out = Vec::with_capacity(data.train.len() * 12);
        for s in &data.train {
            out.extend(twelve_crop_sample(s, tc.crop_width, tc.crop_height)?);
        }
        out
    } else {
        data.train.clone()
    };
    let head = arch.head;
    let train_set = prepare_examples(&train_samples, &preprocess, head, &config.encoding, size)?;
    let val = prepare_examples(&data.val_source, &preprocess, head, &config.encoding, size)?;
    let test = prepare_examples(&data.test, &preprocess, head, &config.encoding, size)?;

    let mut model = build_model(arch, pretrained)?;
    for (k, v) in preprocess.to_provenance() {
        model.provenance.insert(k, v);
    }
    if head == Head::Age {
        model.provenance.insert("encoding".into(), config.encoding.label());
    }
    let outcome = train(model, &train_set, &val, tc)?;
    let (best_metrics, final_metrics) = if test.is_empty() {
        (None, None)
    } else {
        (
            Some(metrics(&outcome.best, &test)?),
            Some(metrics(&outcome.final_model, &test)?),
        )
    };
    Ok(RunResult {
        outcome,
        preprocess,
        best_metrics,
        final_metrics,
    })
}
