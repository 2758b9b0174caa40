use serde::{Deserialize, Serialize};

use crate::data::Gender;
use crate::encoding::{decode_argmax, decode_expected_value, AgeDistribution, Decoder, AGE_BINS};
use crate::nn::{loss, LossKind, NnError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::zoo::Model;

use super::{Example, TrainError};

const EVAL_BATCH: usize = 100;

/// Anything that maps a `[batch, ..]` input to `[batch, outputs]` without
/// side effects.
pub trait Predictor<T: Scalar> {
    fn predict_batch(&self, inputs: &Tensor<T>) -> Result<Tensor<T>, NnError>;
}

impl<T: Scalar> Predictor<T> for Model<T> {
    fn predict_batch(&self, inputs: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.network.predict(inputs)
    }
}

/// Eval-mode outputs for each example, one row per example.
pub fn predict_all<T: Scalar, P: Predictor<T> + ?Sized>(
    model: &P,
    examples: &[Example<T>],
) -> Result<Vec<Vec<T>>, TrainError> {
    let mut rows = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_BATCH) {
        let inputs: Vec<&Tensor<T>> = chunk.iter().map(|e| &e.input).collect();
        let out = model.predict_batch(&Tensor::stack(&inputs).map_err(NnError::from)?)?;
        let width = out.len() / chunk.len();
        rows.extend(out.data().chunks_exact(width).map(<[T]>::to_vec));
    }
    Ok(rows)
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn gender_of<T: Scalar>(row: &[T]) -> Gender {
    Gender::from_class_index(argmax(row))
}

pub(crate) fn distribution_of<T: Scalar>(row: &[T]) -> Result<AgeDistribution, TrainError> {
    Ok(AgeDistribution::new(row.iter().map(|v| v.to_f64_lossy()).collect())?)
}

/// Fraction of examples whose argmax class matches the labelled gender.
pub fn evaluate_gender<T: Scalar, P: Predictor<T> + ?Sized>(
    model: &P,
    test_set: &[Example<T>],
) -> Result<f64, TrainError> {
    if test_set.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let rows = predict_all(model, test_set)?;
    let correct = rows
        .iter()
        .zip(test_set)
        .filter(|(r, e)| gender_of(r) == e.label.gender)
        .count();
    Ok(correct as f64 / test_set.len() as f64)
}

/// Mean absolute error in years under both decoders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeMetrics {
    pub mae_argmax: f64,
    pub mae_expected: f64,
}

impl AgeMetrics {
    pub fn get(&self, decoder: Decoder) -> f64 {
        match decoder {
            Decoder::Argmax => self.mae_argmax,
            Decoder::ExpectedValue => self.mae_expected,
        }
    }
}

pub(crate) fn age_metrics_from_rows<T: Scalar>(
    rows: &[Vec<T>],
    ages: impl Iterator<Item = u32>,
) -> Result<AgeMetrics, TrainError> {
    let (mut arg, mut ev, mut n) = (0.0, 0.0, 0usize);
    for (row, age) in rows.iter().zip(ages) {
        if row.len() != AGE_BINS {
            return Err(NnError::shape("age head", format!("{} outputs", row.len())).into());
        }
        let dist = distribution_of(row)?;
        arg += (f64::from(decode_argmax(&dist)) - f64::from(age)).abs();
        ev += (decode_expected_value(&dist)? - f64::from(age)).abs();
        n += 1;
    }
    if n == 0 {
        return Err(TrainError::EmptySet);
    }
    Ok(AgeMetrics {
        mae_argmax: arg / n as f64,
        mae_expected: ev / n as f64,
    })
}

pub fn evaluate_age_both<T: Scalar, P: Predictor<T> + ?Sized>(
    model: &P,
    test_set: &[Example<T>],
) -> Result<AgeMetrics, TrainError> {
    if test_set.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let rows = predict_all(model, test_set)?;
    age_metrics_from_rows(&rows, test_set.iter().map(|e| e.label.age))
}

/// MAE in years between decoded predictions and integer labels.
pub fn evaluate_age<T: Scalar, P: Predictor<T> + ?Sized>(
    model: &P,
    test_set: &[Example<T>],
    decoder: Decoder,
) -> Result<f64, TrainError> {
    Ok(evaluate_age_both(model, test_set)?.get(decoder))
}

/// Training loss used by age heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeLoss {
    /// Elementwise absolute error between the 81-way output and the target.
    #[default]
    DistributionMae,
    CrossEntropy,
}

impl From<AgeLoss> for LossKind {
    fn from(k: AgeLoss) -> Self {
        match k {
            AgeLoss::DistributionMae => LossKind::MeanAbsoluteError,
            AgeLoss::CrossEntropy => LossKind::CrossEntropy,
        }
    }
}

pub fn age_loss(pred: &AgeDistribution, target: &AgeDistribution, kind: AgeLoss) -> Result<f64, TrainError> {
    if pred.probs().len() != AGE_BINS || target.probs().len() != AGE_BINS {
        return Err(NnError::shape(
            "age loss",
            format!("lengths {} and {}, expected {AGE_BINS}", pred.probs().len(), target.probs().len()),
        )
        .into());
    }
    Ok(loss(pred.probs(), target.probs(), kind.into())?)
}

/// Held-out metric for either head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "head", rename_all = "snake_case")]
pub enum Metrics {
    Gender { accuracy: f64 },
    Age(AgeMetrics),
}
