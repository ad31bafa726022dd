//! Classification metrics, experiment protocols (zero-shot, few-shot,
//! complete, cross-dataset, k-fold), prediction-file scoring and report
//! rendering.

mod experiment;
mod metrics;
mod predfile;
mod report;

use thiserror::Error;

pub use experiment::{
    cross_matrix, evaluate, predict_records, run_experiment, run_experiment_full, run_kfold, Clock, CrossMatrix,
    ExperimentMode, ExperimentReport, ExperimentRun, ExperimentSpec, KFoldReport, Regime, SteppingClock, SystemClock, BUILTIN_MODEL_NAME,
    KFOLD_MAX_ATTEMPTS,
};
pub use metrics::{confusion, metrics, ConfusionCounts, MetricsReport, MulticlassConfusion, ZeroDivision};
pub use predfile::{
    load_predictions, read_predictions, save_predictions, score_prediction_file, score_predictions,
    write_predictions, PredictionRecord, PredictionScore, PREDICTION_HEADER,
};
pub use report::{emit_report, report_cells, ReportFormat, REPORT_COLUMNS};

use crate::datapipe::DataError;
use crate::learner::LearnerError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id {id} (first seen at line {first_line})")]
    DuplicateId { id: u64, line: usize, first_line: usize },
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("nothing to score")]
    Empty,
    #[error("experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
