use std::fmt::Write as _;
use std::path::Path;

use crate::data::DataError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based, counted across serial chunks.
    pub epoch: usize,
    pub chunk: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Accuracy for gender heads, expected-value MAE for age heads.
    pub val_metric: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// The log with wall times zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> TrainLog {
        let mut log = self.clone();
        for r in &mut log.epochs {
            r.seconds = 0.0;
        }
        log
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_metric,seconds\n");
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.3}",
                r.epoch, r.train_loss, r.val_loss, r.val_metric, r.seconds
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_csv()).map_err(|e| DataError::io(path, e))
    }
}
