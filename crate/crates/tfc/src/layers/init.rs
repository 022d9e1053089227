use crate::tensor::{Scalar, Tensor};
use rand::Rng;

/// Uniform initialization in `±sqrt(6 / (fan_in + fan_out))`.
///
/// Keeps early activations inside tanh's linear range; biases are always
/// zero-initialized by the layer constructors.
pub fn glorot_uniform<S: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl Rng,
) -> Tensor<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| S::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape/data agree by construction")
}
