use std::fmt::Write as _;

use crate::data::Gender;
use crate::encoding::Decoder;
use crate::nn::NnError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::zoo::{Head, Model};

use super::eval::{age_metrics_from_rows, distribution_of, gender_of, predict_all, Predictor};
use super::{AgeMetrics, Example, TrainError};

/// Gender classifier routing each input to a gender-specific age model.
#[derive(Debug, Clone)]
pub struct HierarchyModel<T = f32> {
    gender: Model<T>,
    male_age: Model<T>,
    female_age: Model<T>,
}

impl<T: Scalar> HierarchyModel<T> {
    pub fn new(gender: Model<T>, male_age: Model<T>, female_age: Model<T>) -> Result<Self, TrainError> {
        if gender.head != Head::Gender || male_age.head != Head::Age || female_age.head != Head::Age {
            return Err(TrainError::Config(
                "hierarchy needs a gender model and two age models".into(),
            ));
        }
        let input = gender.network.input_shape();
        if male_age.network.input_shape() != input || female_age.network.input_shape() != input {
            return Err(TrainError::Config("hierarchy models disagree on input shape".into()));
        }
        Ok(HierarchyModel {
            gender,
            male_age,
            female_age,
        })
    }

    pub fn gender_model(&self) -> &Model<T> {
        &self.gender
    }

    pub fn age_model(&self, gender: Gender) -> &Model<T> {
        match gender {
            Gender::Male => &self.male_age,
            Gender::Female => &self.female_age,
        }
    }

    /// Routing decisions and the routed age outputs for a batch.
    fn route_rows(&self, examples: &[Example<T>]) -> Result<(Vec<Gender>, Vec<Vec<T>>), TrainError> {
        let routes: Vec<Gender> = predict_all(&self.gender, examples)?
            .iter()
            .map(|r| gender_of(r))
            .collect();
        let male = predict_all(&self.male_age, examples)?;
        let female = predict_all(&self.female_age, examples)?;
        let rows = routes
            .iter()
            .zip(male.into_iter().zip(female))
            .map(|(g, (m, f))| if *g == Gender::Male { m } else { f })
            .collect();
        Ok((routes, rows))
    }
}

/// Classifies gender, then decodes age with the matching age model.
pub fn predict_age_hierarchical<T: Scalar>(
    h: &HierarchyModel<T>,
    input: &Tensor<T>,
    decoder: Decoder,
) -> Result<(Gender, f64), TrainError> {
    let mut shape = vec![1];
    shape.extend_from_slice(input.shape());
    let batch = input.clone().reshape(&shape).map_err(NnError::from)?;
    let gender = gender_of(h.gender.predict_batch(&batch)?.data());
    let out = h.age_model(gender).predict_batch(&batch)?;
    Ok((gender, decoder.decode(&distribution_of(out.data())?)?))
}

/// Paired comparison of the hierarchy against one age model on the same
/// examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchyReport {
    pub samples: usize,
    pub routing_accuracy: f64,
    pub hierarchy: AgeMetrics,
    pub single: Option<AgeMetrics>,
}

impl HierarchyReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "routing_accuracy = {:.6}", self.routing_accuracy);
        let _ = writeln!(s, "hierarchy_mae_argmax = {:.6}", self.hierarchy.mae_argmax);
        let _ = writeln!(s, "hierarchy_mae_expected = {:.6}", self.hierarchy.mae_expected);
        if let Some(single) = self.single {
            let _ = writeln!(s, "single_mae_argmax = {:.6}", single.mae_argmax);
            let _ = writeln!(s, "single_mae_expected = {:.6}", single.mae_expected);
            let _ = writeln!(
                s,
                "expected_mae_difference = {:.6}",
                self.hierarchy.mae_expected - single.mae_expected
            );
        }
        s
    }
}

pub fn evaluate_hierarchy<T: Scalar>(
    h: &HierarchyModel<T>,
    examples: &[Example<T>],
    single: Option<&Model<T>>,
) -> Result<HierarchyReport, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let (routes, rows) = h.route_rows(examples)?;
    let correct = routes.iter().zip(examples).filter(|(g, e)| **g == e.label.gender).count();
    let ages = || examples.iter().map(|e| e.label.age);
    let hierarchy = age_metrics_from_rows(&rows, ages())?;
    let single = single
        .map(|m| age_metrics_from_rows(&predict_all(m, examples)?, ages()))
        .transpose()?;
    Ok(HierarchyReport {
        samples: examples.len(),
        routing_accuracy: correct as f64 / examples.len() as f64,
        hierarchy,
        single,
    })
}
