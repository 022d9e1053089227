//! Losses, metrics, the Adam optimizer and the epoch loop.

mod adam;
mod loss;
mod metrics;
mod run;

pub use adam::Adam;
pub use loss::{cross_entropy_from_logits, mse_loss};
pub use metrics::{classification_accuracy, jsb_accuracy, threshold_binarize, JsbAccuracy};
pub use run::{
    evaluate_classifier, evaluate_forecaster, evaluate_jsb, persistence_forecast_mse,
    persistence_jsb, train, Batch, BatchSource, EpochRow, SliceSource, Target, TrainMode,
    TrainReport, TrainSettings,
};

use crate::model::ModelError;
use crate::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("label {0} out of range for {1} classes")]
    LabelOutOfRange(usize, usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
