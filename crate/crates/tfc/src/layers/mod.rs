//! Differentiable layers with explicit forward and reverse-mode backward
//! passes.
//!
//! Layers own their parameters and gradient accumulators. Saved activations
//! are kept on an internal stack so a layer can be applied several times in
//! one unrolled graph (multi-step forecasting); backward calls pop in reverse
//! order of the matching forwards.

mod activation;
mod affine;
mod cell;
mod conv;
mod gradcheck;
mod init;
mod local;
mod patches;

pub use activation::{Activation, ActivationLayer};
pub use affine::PointwiseAffine;
pub use cell::{ResidualCell, ResidualCellSpec};
pub use conv::{same_padding, Conv, ConvSpec};
pub use gradcheck::{
    gradcheck, GradCheckEntry, GradCheckReport, GradSystem, LayerSystem, GRADCHECK_EPSILON,
};
pub use init::glorot_uniform;
pub use local::LocallyConnected;
pub use patches::ExtractPatches;

use crate::tensor::{Result, Scalar, Tensor};

/// Callback receiving each parameter's dotted name, value and gradient
/// accumulator.
pub type ParamVisitor<'a, S> = dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>) + 'a;

pub trait Layer<S: Scalar> {
    /// Runs the layer. With `save` set the input-side activations needed by
    /// [`Layer::backward`] are pushed on the saved stack.
    fn forward(&mut self, x: &Tensor<S>, save: bool) -> Result<Tensor<S>>;

    /// Consumes the most recent saved activation, accumulates parameter
    /// gradients and returns the gradient with respect to the input.
    fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>>;

    fn visit_params(&mut self, _prefix: &str, _f: &mut ParamVisitor<'_, S>) {}

    fn zero_grads(&mut self) {}

    fn clear_saved(&mut self) {}

    /// Trainable scalar count.
    fn param_count(&self) -> usize {
        0
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
