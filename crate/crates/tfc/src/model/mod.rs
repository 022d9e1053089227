//! Network assembly: the time-folding residual block, the incriminator cell
//! that joins the block summary with the last input frame, multi-step
//! forecasting, and the image-classifier head.

mod block;
mod builtins;
mod incriminator;
mod tfc;

pub use block::{ResidualBlock, ResidualBlockSpec};
pub use builtins::{builtin_config, builtin_names, build_model, ModelConfig};
pub use incriminator::{Incriminator, IncriminatorSpec};
pub use tfc::{shift_append, TfcModel};

use crate::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown built-in model `{0}`")]
    UnknownBuiltin(String),
    #[error("cell strides fold a length-{window} window to {folded}, not 1")]
    FoldShortfall { window: usize, folded: usize },
    #[error("expected input features {expected}, got {actual}")]
    FeatureMismatch { expected: usize, actual: usize },
    #[error("expected window shape {expected:?}, got {actual:?}")]
    WindowShape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("spatial shapes differ: {left:?} vs {right:?}")]
    SpatialMismatch {
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("model has no classifier head")]
    HeadAbsent,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
