//! Age label encodings over the integer ages 5..=85 and decoders that turn
//! an 81-way distribution back into an age.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub const MIN_AGE: u32 = 5;
pub const MAX_AGE: u32 = 85;
/// Number of entries in an [`AgeDistribution`].
pub const AGE_BINS: usize = (MAX_AGE - MIN_AGE + 1) as usize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodingError {
    #[error("age {0} outside the encodable range {MIN_AGE}..={MAX_AGE}")]
    AgeOutOfRange(u32),
    #[error("distribution has {0} entries, expected {AGE_BINS}")]
    WrongLength(usize),
    #[error("distribution has no positive mass")]
    Degenerate,
    #[error("invalid alpha schedule: {0}")]
    BadSchedule(String),
}

fn check_age(age: u32) -> Result<(), EncodingError> {
    if (MIN_AGE..=MAX_AGE).contains(&age) {
        Ok(())
    } else {
        Err(EncodingError::AgeOutOfRange(age))
    }
}

/// Probability (or score) per integer age; entry `j` belongs to age `5 + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeDistribution {
    probs: Vec<f64>,
}

impl AgeDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, EncodingError> {
        if probs.len() != AGE_BINS {
            return Err(EncodingError::WrongLength(probs.len()));
        }
        Ok(AgeDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Value at an integer age.
    pub fn at(&self, age: u32) -> f64 {
        self.probs[(age - MIN_AGE) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Shannon entropy of the normalised distribution, in nats.
    pub fn entropy(&self) -> f64 {
        let s = self.sum();
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| {
                let q = p / s;
                -q * q.ln()
            })
            .sum()
    }
}

/// How the Gaussian spread depends on the age being encoded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaSchedule {
    Static { alpha: f64 },
    /// Linear in age from `min` at age 5 to `max` at age 85.
    Linear { min: f64, max: f64 },
}

impl Default for AlphaSchedule {
    fn default() -> Self {
        AlphaSchedule::Static { alpha: 2.5 }
    }
}

impl AlphaSchedule {
    pub fn validate(&self) -> Result<(), EncodingError> {
        let ok = match *self {
            AlphaSchedule::Static { alpha } => alpha > 0.0 && alpha.is_finite(),
            AlphaSchedule::Linear { min, max } => min > 0.0 && min <= max && max.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(EncodingError::BadSchedule(format!("{self:?}")))
        }
    }

    pub fn label(&self) -> String {
        match *self {
            AlphaSchedule::Static { alpha } => format!("alpha={alpha}"),
            AlphaSchedule::Linear { min, max } => format!("alpha={min}-{max}"),
        }
    }
}

pub fn alpha_for_age(age: u32, schedule: &AlphaSchedule) -> Result<f64, EncodingError> {
    check_age(age)?;
    schedule.validate()?;
    Ok(match *schedule {
        AlphaSchedule::Static { alpha } => alpha,
        AlphaSchedule::Linear { min, max } => {
            min + (max - min) * f64::from(age - MIN_AGE) / f64::from(MAX_AGE - MIN_AGE)
        }
    })
}

pub fn one_hot_encode(age: u32) -> Result<AgeDistribution, EncodingError> {
    check_age(age)?;
    let mut probs = vec![0.0; AGE_BINS];
    probs[(age - MIN_AGE) as usize] = 1.0;
    Ok(AgeDistribution { probs })
}

/// Gaussian label distribution centred on `age`:
/// `exp(-(i - a)^2 / (2 alpha^2)) / (alpha sqrt(2 pi))` at every integer
/// age `i`. The truncated vector is left unnormalised.
pub fn ldae_encode(age: u32, schedule: &AlphaSchedule) -> Result<AgeDistribution, EncodingError> {
    let alpha = alpha_for_age(age, schedule)?;
    let norm = 1.0 / (alpha * (2.0 * PI).sqrt());
    let a = f64::from(age);
    let probs = (MIN_AGE..=MAX_AGE)
        .map(|i| {
            let d = f64::from(i) - a;
            norm * (-(d * d) / (2.0 * alpha * alpha)).exp()
        })
        .collect();
    Ok(AgeDistribution { probs })
}

/// Age with the largest entry; ties resolve to the youngest age.
pub fn decode_argmax(dist: &AgeDistribution) -> u32 {
    let mut best = 0;
    for (j, &p) in dist.probs.iter().enumerate() {
        if p > dist.probs[best] {
            best = j;
        }
    }
    MIN_AGE + best as u32
}

/// Probability-weighted mean age, normalising by the total mass.
pub fn decode_expected_value(dist: &AgeDistribution) -> Result<f64, EncodingError> {
    let mut mass = 0.0;
    let mut weighted = 0.0;
    for (j, &p) in dist.probs.iter().enumerate() {
        let p = p.max(0.0);
        mass += p;
        weighted += p * f64::from(MIN_AGE + j as u32);
    }
    if !(mass > 0.0) {
        return Err(EncodingError::Degenerate);
    }
    Ok(weighted / mass)
}

/// Target encoding applied to age labels during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgeEncoding {
    OneHot,
    Ldae { schedule: AlphaSchedule },
}

impl Default for AgeEncoding {
    fn default() -> Self {
        AgeEncoding::Ldae {
            schedule: AlphaSchedule::default(),
        }
    }
}

impl AgeEncoding {
    pub fn encode(&self, age: u32) -> Result<AgeDistribution, EncodingError> {
        match self {
            AgeEncoding::OneHot => one_hot_encode(age),
            AgeEncoding::Ldae { schedule } => ldae_encode(age, schedule),
        }
    }

    pub fn label(&self) -> String {
        match self {
            AgeEncoding::OneHot => "one-hot".to_string(),
            AgeEncoding::Ldae { schedule } => schedule.label(),
        }
    }
}

/// How an age is read off a predicted distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    Argmax,
    #[default]
    ExpectedValue,
}

impl Decoder {
    pub fn decode(&self, dist: &AgeDistribution) -> Result<f64, EncodingError> {
        match self {
            Decoder::Argmax => Ok(f64::from(decode_argmax(dist))),
            Decoder::ExpectedValue => decode_expected_value(dist),
        }
    }
}

/// CSV row `age,p5,...,p85`.
pub fn distribution_csv_row(age: u32, dist: &AgeDistribution) -> String {
    let mut row = age.to_string();
    for p in dist.probs() {
        row.push(',');
        row.push_str(&p.to_string());
    }
    row
}

pub fn distribution_csv_header() -> String {
    let mut h = String::from("age");
    for i in MIN_AGE..=MAX_AGE {
        h.push_str(&format!(",p{i}"));
    }
    h
}
