use crate::data::{ImageSample, LabelRecord};
use crate::encoding::AgeEncoding;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::zoo::Head;

use super::TrainError;

/// A network-ready input paired with its training target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T = f32> {
    pub input: Tensor<T>,
    pub target: Tensor<T>,
    pub label: LabelRecord,
}

impl<T: Scalar> Example<T> {
    pub fn from_sample(
        sample: ImageSample<T>,
        head: Head,
        encoding: &AgeEncoding,
    ) -> Result<Self, TrainError> {
        let target = target_for(&sample.label, head, encoding)?;
        Ok(Example {
            input: sample.pixels,
            target,
            label: sample.label,
        })
    }
}

/// One-hot gender, or the encoded age distribution.
pub fn target_for<T: Scalar>(
    label: &LabelRecord,
    head: Head,
    encoding: &AgeEncoding,
) -> Result<Tensor<T>, TrainError> {
    Ok(match head {
        Head::Gender => {
            let mut t = vec![T::zero(); 2];
            t[label.gender.class_index()] = T::one();
            Tensor::from_vec(t)
        }
        Head::Age => Tensor::from_vec(
            encoding
                .encode(label.age)?
                .probs()
                .iter()
                .map(|&p| T::from_f64_lossy(p))
                .collect(),
        ),
    })
}
