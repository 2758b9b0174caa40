use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::NnError;

/// Predictions are clamped into `[BCE_EPSILON, 1 - BCE_EPSILON]` before any log.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean over entries of `-[t ln p + (1 - t) ln(1 - p)]`.
    BinaryCrossEntropy,
    /// Mean over entries of `|t - p|`.
    MeanAbsoluteError,
    /// `-sum t ln p` against a target distribution.
    CrossEntropy,
}

fn check_len(pred: usize, target: usize) -> Result<(), NnError> {
    if pred != target {
        return Err(NnError::shape(
            "loss",
            format!("prediction has {pred} entries, target has {target}"),
        ));
    }
    Ok(())
}

fn clamp(p: f64) -> f64 {
    p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON)
}

/// Loss of one prediction vector, accumulated in `f64`.
pub fn loss<T: Scalar>(pred: &[T], target: &[T], kind: LossKind) -> Result<f64, NnError> {
    check_len(pred.len(), target.len())?;
    let n = pred.len() as f64;
    let pairs = pred.iter().zip(target).map(|(p, t)| (p.to_f64_lossy(), t.to_f64_lossy()));
    Ok(match kind {
        LossKind::MeanAbsoluteError => pairs.map(|(p, t)| (t - p).abs()).sum::<f64>() / n,
        LossKind::BinaryCrossEntropy => {
            pairs
                .map(|(p, t)| {
                    let p = clamp(p);
                    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / n
        }
        LossKind::CrossEntropy => pairs.map(|(p, t)| -t * clamp(p).ln()).sum(),
    })
}

/// Derivative of [`loss`] with respect to each prediction entry.
pub fn loss_grad<T: Scalar>(pred: &[T], target: &[T], kind: LossKind) -> Result<Vec<T>, NnError> {
    check_len(pred.len(), target.len())?;
    let n = pred.len() as f64;
    let inside = |p: f64| (BCE_EPSILON..=1.0 - BCE_EPSILON).contains(&p);
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let (p, t) = (p.to_f64_lossy(), t.to_f64_lossy());
            let g = match kind {
                LossKind::MeanAbsoluteError => {
                    if p > t {
                        1.0 / n
                    } else if p < t {
                        -1.0 / n
                    } else {
                        0.0
                    }
                }
                LossKind::BinaryCrossEntropy if inside(p) => (p - t) / (p * (1.0 - p)) / n,
                LossKind::CrossEntropy if inside(p) => -t / p,
                _ => 0.0,
            };
            T::from_f64_lossy(g)
        })
        .collect())
}

/// Mean loss over a `[batch, n]` prediction and the matching gradient,
/// already divided by the batch size.
pub fn batch_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    kind: LossKind,
) -> Result<(f64, Tensor<T>), NnError> {
    if pred.shape() != target.shape() || pred.shape().len() != 2 {
        return Err(NnError::shape(
            "loss",
            format!(
                "prediction shape {:?} vs target shape {:?}",
                pred.shape(),
                target.shape()
            ),
        ));
    }
    let (batch, width) = (pred.shape()[0], pred.shape()[1]);
    let scale = T::from_f64_lossy(1.0 / batch as f64);
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, t) in pred.data().chunks_exact(width).zip(target.data().chunks_exact(width)) {
        total += loss(p, t, kind)?;
        grad.extend(loss_grad(p, t, kind)?.into_iter().map(|g| g * scale));
    }
    Ok((total / batch as f64, Tensor::new(pred.shape().to_vec(), grad)?))
}
