use std::collections::HashSet;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{batch_loss, loss, Adadelta, LossKind, Mode, NnError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::zoo::{Head, Model};

use super::eval::{age_metrics_from_rows, gender_of, predict_all};
use super::{EpochRecord, Example, TrainConfig, TrainError, TrainLog};

#[derive(Debug, Clone)]
pub struct TrainOutcome<T = f32> {
    /// Snapshot with the lowest validation loss; the earliest wins ties.
    pub best: Model<T>,
    pub final_model: Model<T>,
    pub log: TrainLog,
}

pub(crate) fn loss_kind(head: Head, config: &TrainConfig) -> LossKind {
    match head {
        Head::Gender => config.gender_loss,
        Head::Age => config.age_loss.into(),
    }
}

fn check_examples<T: Scalar>(model: &Model<T>, set: &[Example<T>], what: &str) -> Result<(), TrainError> {
    let input = model.network.input_shape();
    let outputs = model.head.outputs();
    for e in set {
        if e.input.shape() != input || e.target.len() != outputs {
            return Err(TrainError::Config(format!(
                "{what} example {} has input {:?} and {} targets; model expects {:?} and {outputs}",
                e.label.image_path,
                e.input.shape(),
                e.target.len(),
                input
            )));
        }
    }
    Ok(())
}

/// Mean validation loss and metric over `val`.
pub(crate) fn validate<T: Scalar>(
    model: &Model<T>,
    val: &[Example<T>],
    kind: LossKind,
) -> Result<(f64, f64), TrainError> {
    let rows = predict_all(model, val)?;
    let mut total = 0.0;
    for (row, e) in rows.iter().zip(val) {
        total += loss(row, e.target.data(), kind)?;
    }
    let metric = match model.head {
        Head::Gender => {
            let hits = rows.iter().zip(val).filter(|(r, e)| gender_of(r) == e.label.gender).count();
            hits as f64 / val.len() as f64
        }
        Head::Age => age_metrics_from_rows(&rows, val.iter().map(|e| e.label.age))?.mae_expected,
    };
    Ok((total / val.len() as f64, metric))
}

fn stamp<T: Scalar>(model: &mut Model<T>, which: &str, record: &EpochRecord, seed: u64) {
    let p = &mut model.provenance;
    p.insert("checkpoint".into(), which.into());
    p.insert("epoch".into(), record.epoch.to_string());
    p.insert("val_loss".into(), record.val_loss.to_string());
    p.insert("train_seed".into(), seed.to_string());
}

/// Runs the full protocol: a seeded validation sample drawn once, the
/// training set split into `serial_splits` contiguous chunks trained one
/// after another for `epochs` epochs each, reshuffled every epoch.
pub fn train<T: Scalar>(
    mut model: Model<T>,
    train_set: &[Example<T>],
    val_source: &[Example<T>],
    config: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    if config.val_sample_size > val_source.len() {
        return Err(TrainError::Config(format!(
            "validation sample of {} requested from {} examples",
            config.val_sample_size,
            val_source.len()
        )));
    }
    if config.serial_splits > train_set.len() {
        return Err(TrainError::Config(format!(
            "{} serial splits for {} training examples",
            config.serial_splits,
            train_set.len()
        )));
    }
    let train_paths: HashSet<&str> = train_set.iter().map(|e| e.label.image_path.as_str()).collect();
    if let Some(e) = val_source.iter().find(|e| train_paths.contains(e.label.image_path.as_str())) {
        return Err(TrainError::Config(format!(
            "image {} is in both the training and validation data",
            e.label.image_path
        )));
    }
    check_examples(&model, train_set, "training")?;
    check_examples(&model, val_source, "validation")?;

    let kind = loss_kind(model.head, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picks = index::sample(&mut rng, val_source.len(), config.val_sample_size).into_vec();
    picks.sort_unstable();
    let val: Vec<Example<T>> = picks.iter().map(|&i| val_source[i].clone()).collect();

    let mut optimizer = Adadelta::new(&model.network, config.optimizer)?;
    let n = train_set.len();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, Model<T>)> = None;
    let mut epoch = 0;
    for chunk in 0..config.serial_splits {
        let range = chunk * n / config.serial_splits..(chunk + 1) * n / config.serial_splits;
        let chunk_len = range.len();
        for _ in 0..config.epochs {
            epoch += 1;
            let started = Instant::now();
            let mut order: Vec<usize> = range.clone().collect();
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for (b, batch) in order.chunks(config.batch_size).enumerate() {
                let inputs: Vec<&Tensor<T>> = batch.iter().map(|&i| &train_set[i].input).collect();
                let targets: Vec<&Tensor<T>> = batch.iter().map(|&i| &train_set[i].target).collect();
                let x = Tensor::stack(&inputs).map_err(NnError::from)?;
                let y = Tensor::stack(&targets).map_err(NnError::from)?;
                let out = model.network.forward(&x, Mode::Train, &mut rng)?;
                let (l, grad) = batch_loss(&out, &y, kind)?;
                if !l.is_finite() {
                    return Err(TrainError::NonFinite {
                        epoch,
                        batch: b + 1,
                        loss: l,
                    });
                }
                let grads = model.network.backward(&grad)?;
                optimizer.step(&mut model.network, &grads)?;
                total += l * batch.len() as f64;
            }
            let (val_loss, val_metric) = validate(&model, &val, kind)?;
            if !val_loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: 0,
                    loss: val_loss,
                });
            }
            let record = EpochRecord {
                epoch,
                chunk: chunk + 1,
                train_loss: total / chunk_len as f64,
                val_loss,
                val_metric,
                seconds: started.elapsed().as_secs_f64(),
            };
            log.epochs.push(record);
            if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
                log.best_epoch = epoch;
                let mut snapshot = model.clone();
                stamp(&mut snapshot, "best", &record, config.seed);
                best = Some((val_loss, snapshot));
            }
        }
    }
    let last = *log.last().expect("at least one epoch");
    stamp(&mut model, "final", &last, config.seed);
    let (_, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        final_model: model,
        log,
    })
}
