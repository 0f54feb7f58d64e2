//! The operational shell: objective runners, dataset ingestion, study
//! reports and the command line.

pub mod cli;
mod dataset;
mod objective;
mod report;

use std::path::PathBuf;

use thiserror::Error;

use crate::augment::AugmentError;
use crate::eval::EvalError;
use crate::imaging::ImageError;
use crate::importance::ImportanceError;
use crate::search::SearchError;

pub use self::dataset::{augment_dataset, AugmentOptions, DatasetManifest, GROUND_TRUTH_FILE, IMAGES_DIR, MASKS_DIR};
pub use self::objective::{parse_response, ObjectiveRunner, Surrogate};
pub use self::report::{report_study, BestTrial, CountSummary, ReportPoint, StudyReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad input that the user can fix; maps to exit code 1.
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl HarnessError {
    /// Whether the error comes from bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HarnessError::Validation(_)
                | HarnessError::Augment(AugmentError::Config(_))
                | HarnessError::Search(SearchError::Config(_))
                | HarnessError::Importance(ImportanceError::Config(_) | ImportanceError::UnknownParam(_))
                | HarnessError::Eval(EvalError::Invalid(_) | EvalError::UnknownImage(_) | EvalError::UnknownClass(_))
        )
    }
}
