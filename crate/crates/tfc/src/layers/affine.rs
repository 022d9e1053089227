use super::{glorot_uniform, join, Layer, ParamVisitor};
use crate::tensor::{Result, Scalar, Tensor, TensorError};
use rand::Rng;

/// Fully connected layer applied along the feature axis at every
/// (batch, time, spatial) location; the same matrix is shared by all
/// locations.
pub struct PointwiseAffine<S: Scalar> {
    pub in_features: usize,
    pub out_features: usize,
    weight: Tensor<S>, // [in, out]
    bias: Tensor<S>,   // [out]
    grad_w: Tensor<S>,
    grad_b: Tensor<S>,
    saved: Vec<Tensor<S>>,
}

impl<S: Scalar> PointwiseAffine<S> {
    pub fn new(in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        Self {
            in_features,
            out_features,
            weight: glorot_uniform(&[in_features, out_features], in_features, out_features, rng),
            bias: Tensor::zeros(&[out_features]),
            grad_w: Tensor::zeros(&[in_features, out_features]),
            grad_b: Tensor::zeros(&[out_features]),
            saved: Vec::new(),
        }
    }

    /// Overwrites the weight matrix; used by tests and identity constructions.
    pub fn set_weight(&mut self, w: Tensor<S>) {
        assert_eq!(w.shape(), self.weight.shape());
        self.weight = w;
    }

    pub fn weight(&self) -> &Tensor<S> {
        &self.weight
    }
}

impl<S: Scalar> Layer<S> for PointwiseAffine<S> {
    fn forward(&mut self, x: &Tensor<S>, save: bool) -> Result<Tensor<S>> {
        let m = *x.shape().last().expect("rank >= 1");
        if m != self.in_features {
            return Err(TensorError::ShapeMismatch {
                left: x.shape().to_vec(),
                right: vec![self.in_features],
                context: "pointwise affine feature axis",
            });
        }
        let locations = x.len() / m;
        let n = self.out_features;
        let mut out_shape = x.shape().to_vec();
        *out_shape.last_mut().unwrap() = n;
        let mut out = Tensor::zeros(&out_shape);
        unsafe {
            S::gemm(
                locations,
                m,
                n,
                out.data_mut().as_mut_ptr(),
                x.data().as_ptr(),
                self.weight.data().as_ptr(),
                S::zero(),
                S::one(),
            );
        }
        let bias = self.bias.data();
        for row in out.data_mut().chunks_mut(n) {
            for (v, &b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        if save {
            self.saved.push(x.clone());
        }
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let x = self.saved.pop().expect("backward without matching forward");
        let m = self.in_features;
        let n = self.out_features;
        let locations = x.len() / m;
        if grad_out.len() != locations * n {
            return Err(TensorError::ShapeMismatch {
                left: grad_out.shape().to_vec(),
                right: x.shape().to_vec(),
                context: "pointwise affine backward",
            });
        }
        // grad_w += x^T @ g
        unsafe {
            S::gemm_strided(
                m,
                locations,
                n,
                self.grad_w.data_mut().as_mut_ptr(),
                x.data().as_ptr(),
                1,
                m as isize,
                grad_out.data().as_ptr(),
                n as isize,
                1,
                S::one(),
                S::one(),
            );
        }
        for row in grad_out.data().chunks(n) {
            for (gb, &g) in self.grad_b.data_mut().iter_mut().zip(row) {
                *gb += g;
            }
        }
        // grad_x = g @ w^T
        let mut grad_x = Tensor::zeros(x.shape());
        unsafe {
            S::gemm_strided(
                locations,
                n,
                m,
                grad_x.data_mut().as_mut_ptr(),
                grad_out.data().as_ptr(),
                n as isize,
                1,
                self.weight.data().as_ptr(),
                1,
                n as isize,
                S::zero(),
                S::one(),
            );
        }
        Ok(grad_x)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, S>) {
        f(&join(prefix, "weight"), &mut self.weight, &mut self.grad_w);
        f(&join(prefix, "bias"), &mut self.bias, &mut self.grad_b);
    }

    fn zero_grads(&mut self) {
        self.grad_w.fill(S::zero());
        self.grad_b.fill(S::zero());
    }

    fn clear_saved(&mut self) {
        self.saved.clear();
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}
