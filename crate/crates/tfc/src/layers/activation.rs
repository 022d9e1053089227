use super::Layer;
use crate::tensor::{Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    /// Softmax along the feature (last) axis.
    Softmax,
}

/// Parameter-free activation layer; saves its own output for backward.
pub struct ActivationLayer<S: Scalar> {
    pub kind: Activation,
    saved: Vec<Tensor<S>>,
}

impl<S: Scalar> ActivationLayer<S> {
    pub fn new(kind: Activation) -> Self {
        Self {
            kind,
            saved: Vec::new(),
        }
    }

    pub fn apply(kind: Activation, x: &Tensor<S>) -> Tensor<S> {
        match kind {
            Activation::Tanh => x.map(|v| v.tanh()),
            Activation::Relu => x.map(|v| if v > S::zero() { v } else { S::zero() }),
            Activation::Softmax => {
                let features = *x.shape().last().expect("rank >= 1");
                let mut out = x.clone();
                for row in out.data_mut().chunks_mut(features) {
                    let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
                    let mut sum = S::zero();
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                }
                out
            }
        }
    }
}

impl<S: Scalar> Layer<S> for ActivationLayer<S> {
    fn forward(&mut self, x: &Tensor<S>, save: bool) -> Result<Tensor<S>> {
        let y = Self::apply(self.kind, x);
        if save {
            self.saved.push(y.clone());
        }
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let y = self.saved.pop().expect("backward without matching forward");
        match self.kind {
            Activation::Tanh => grad_out.zip(&y, |g, y| g * (S::one() - y * y)),
            Activation::Relu => grad_out.zip(&y, |g, y| if y > S::zero() { g } else { S::zero() }),
            Activation::Softmax => {
                let features = *y.shape().last().expect("rank >= 1");
                let mut grad = grad_out.clone();
                for (grow, yrow) in grad
                    .data_mut()
                    .chunks_mut(features)
                    .zip(y.data().chunks(features))
                {
                    let dot = grow
                        .iter()
                        .zip(yrow)
                        .fold(S::zero(), |acc, (&g, &y)| acc + g * y);
                    for (g, &y) in grow.iter_mut().zip(yrow) {
                        *g = y * (*g - dot);
                    }
                }
                Ok(grad)
            }
        }
    }

    fn clear_saved(&mut self) {
        self.saved.clear();
    }
}
