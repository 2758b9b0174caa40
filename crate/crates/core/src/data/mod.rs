//! Label ingestion and cleaning, subject subsetting, image loading,
//! pixel normalisation and crop augmentation.

mod augment;
mod clean;
mod labels;
mod pnm;
mod stats;
mod subset;

pub use augment::{crop, mirror, twelve_crop, twelve_crop_sample};
pub use clean::{
    clean_labels, detect_inconsistencies, load_overrides, write_report, CleanOutcome, Field,
    InconsistencyReport, Override, SubjectInconsistency,
};
pub use labels::{
    load_labels, parse_labels, write_labels, AgeRange, Gender, LabelRecord, LoadedLabels, Race,
    Reject,
};
pub use pnm::{
    decode_pnm, encode_pnm, load_image, load_sample, resize_bilinear, save_image, ImageSample,
    RawImage,
};
pub use stats::{
    compute_standardization_stats, read_stats_file, standardize, unstandardize, write_stats_file,
    zero_center, StandardizationStats,
};
pub use subset::{guo_mu_subset, SplitSet, SubsetConfig, FULL_ROSTER, FULL_SET_SIZE};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("not enough eligible records: {0}")]
    Sizing(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        DataError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
