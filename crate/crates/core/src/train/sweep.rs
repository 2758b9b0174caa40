use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoding::{AgeEncoding, AlphaSchedule};
use crate::scalar::Scalar;
use crate::zoo::{Head, Model};

use super::{run_experiment, DataSplits, ExperimentConfig, Metrics, TrainError};

/// Configuration field varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epochs,
    Dropout,
    DenseSizes,
    AlphaSchedule,
    Encoding,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Epochs => "epochs",
            SweepAxis::Dropout => "dropout",
            SweepAxis::DenseSizes => "dense_sizes",
            SweepAxis::AlphaSchedule => "alpha_schedule",
            SweepAxis::Encoding => "encoding",
        }
    }

    /// `base` with this axis set to `value`.
    ///
    /// Dense sizes read as `512x2` or `16,16`; alpha schedules as `2.5` or
    /// `1-4` (linear from the youngest to the oldest age); encodings as
    /// `one-hot` or an alpha schedule.
    pub fn apply(self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig, TrainError> {
        let bad = |what: &str| TrainError::Config(format!("invalid {what} value {value:?}"));
        let v = value.trim();
        let mut cfg = base.clone();
        match self {
            SweepAxis::Epochs => cfg.train.epochs = v.parse().map_err(|_| bad("epochs"))?,
            SweepAxis::Dropout => cfg.arch.dropout = v.parse().map_err(|_| bad("dropout"))?,
            SweepAxis::DenseSizes => cfg.arch.dense = parse_dense(v).ok_or_else(|| bad("dense_sizes"))?,
            SweepAxis::AlphaSchedule => {
                cfg.encoding = AgeEncoding::Ldae {
                    schedule: parse_schedule(v).ok_or_else(|| bad("alpha_schedule"))?,
                }
            }
            SweepAxis::Encoding => {
                cfg.encoding = if v == "one-hot" || v == "one_hot" {
                    AgeEncoding::OneHot
                } else {
                    AgeEncoding::Ldae {
                        schedule: parse_schedule(v).ok_or_else(|| bad("encoding"))?,
                    }
                }
            }
        }
        cfg.train.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [
            SweepAxis::Epochs,
            SweepAxis::Dropout,
            SweepAxis::DenseSizes,
            SweepAxis::AlphaSchedule,
            SweepAxis::Encoding,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| format!("unknown sweep axis {s:?}"))
    }
}

fn parse_dense(v: &str) -> Option<Vec<usize>> {
    let sizes: Vec<usize> = match v.split_once('x') {
        Some((size, count)) => vec![size.trim().parse().ok()?; count.trim().parse().ok()?],
        None => v.split(',').map(|s| s.trim().parse().ok()).collect::<Option<_>>()?,
    };
    (!sizes.is_empty() && sizes.iter().all(|&s| s > 0)).then_some(sizes)
}

fn parse_schedule(v: &str) -> Option<AlphaSchedule> {
    let schedule = match v.split_once('-') {
        Some((lo, hi)) => AlphaSchedule::Linear {
            min: lo.trim().parse().ok()?,
            max: hi.trim().parse().ok()?,
        },
        None => AlphaSchedule::Static {
            alpha: v.parse().ok()?,
        },
    };
    schedule.validate().ok()?;
    Some(schedule)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    /// Best-checkpoint and final-checkpoint metrics, or the run's error.
    pub result: Result<(Metrics, Metrics), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub head: Head,
    pub rows: Vec<SweepRow>,
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

impl SweepTable {
    pub fn header(&self) -> String {
        let axis = self.axis.name();
        match self.head {
            Head::Gender => format!("{axis},best_accuracy,final_accuracy,error"),
            Head::Age => format!(
                "{axis},best_mae_argmax,best_mae_expected,final_mae_argmax,final_mae_expected,error"
            ),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header();
        s.push('\n');
        for row in &self.rows {
            let value = csv_field(&row.value);
            let cols = match (&row.result, self.head) {
                (Ok((Metrics::Gender { accuracy: b }, Metrics::Gender { accuracy: f })), _) => {
                    format!("{},{},", fmt(*b), fmt(*f))
                }
                (Ok((Metrics::Age(b), Metrics::Age(f))), _) => format!(
                    "{},{},{},{},",
                    fmt(b.mae_argmax),
                    fmt(b.mae_expected),
                    fmt(f.mae_argmax),
                    fmt(f.mae_expected)
                ),
                (Ok(_), _) => unreachable!("metrics follow the head"),
                (Err(e), Head::Gender) => format!(",,{}", csv_field(e)),
                (Err(e), Head::Age) => format!(",,,,{}", csv_field(e)),
            };
            let _ = writeln!(s, "{value},{cols}");
        }
        s
    }
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\"").replace('\n', " "))
    } else {
        v.to_string()
    }
}

/// One train-and-evaluate run per value, all with `base`'s seeds. A failed
/// run becomes an error row and the sweep moves on.
pub fn sweep<T: Scalar>(
    axis: SweepAxis,
    values: &[String],
    base: &ExperimentConfig,
    data: &DataSplits<T>,
    pretrained: Option<&Model<T>>,
) -> Result<SweepTable, TrainError> {
    if values.is_empty() {
        return Err(TrainError::Config("sweep needs at least one value".into()));
    }
    if data.test.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let rows = values
        .iter()
        .map(|value| {
            let result = axis
                .apply(base, value)
                .and_then(|cfg| run_experiment(&cfg, data, pretrained))
                .map(|r| (r.best_metrics.expect("test set checked"), r.final_metrics.expect("test set checked")))
                .map_err(|e| e.to_string());
            SweepRow {
                value: value.clone(),
                result,
            }
        })
        .collect();
    Ok(SweepTable {
        axis,
        head: base.arch.head,
        rows,
    })
}
