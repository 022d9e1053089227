use super::{glorot_uniform, join, ExtractPatches, Layer, ParamVisitor};
use crate::tensor::{Result, Scalar, Tensor, TensorError};
use rand::Rng;

/// D-dimensional locally connected layer: like a kernel-`s` convolution with
/// "same" padding, except that every spatial location has its own weight
/// matrix (no sharing). Spatial shape is unchanged.
pub struct LocallyConnected<S: Scalar> {
    pub spatial: Vec<usize>,
    pub kernel: usize,
    pub in_features: usize,
    pub out_features: usize,
    weight: Tensor<S>, // [locations, s^D * in, out]
    bias: Tensor<S>,   // [locations, out]
    grad_w: Tensor<S>,
    grad_b: Tensor<S>,
    gather: ExtractPatches<S>,
    saved: Vec<Tensor<S>>, // gathered patches
}

impl<S: Scalar> LocallyConnected<S> {
    pub fn new(
        spatial: &[usize],
        kernel: usize,
        in_features: usize,
        out_features: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let locations: usize = spatial.iter().product();
        let patch = kernel.pow(spatial.len() as u32) * in_features;
        Self {
            spatial: spatial.to_vec(),
            kernel,
            in_features,
            out_features,
            weight: glorot_uniform(&[locations, patch, out_features], patch, out_features, rng),
            bias: Tensor::zeros(&[locations, out_features]),
            grad_w: Tensor::zeros(&[locations, patch, out_features]),
            grad_b: Tensor::zeros(&[locations, out_features]),
            gather: ExtractPatches::new(kernel),
            saved: Vec::new(),
        }
    }

    /// Sets every location's matrix to the identity (requires `s = 1` and
    /// equal feature counts) and zeroes the biases.
    pub fn set_identity(&mut self) {
        assert_eq!(self.kernel, 1);
        assert_eq!(self.in_features, self.out_features);
        self.weight = Tensor::from_fn(self.weight.shape(), |i| {
            if i[1] == i[2] {
                S::one()
            } else {
                S::zero()
            }
        });
        self.bias.fill(S::zero());
    }

    /// Copies one matrix/bias pair to every location, making the layer
    /// behave exactly like a kernel-`s` convolution (equivalence oracle).
    pub fn broadcast_location(&mut self, matrix: &Tensor<S>, bias: &[S]) {
        let locations: usize = self.spatial.iter().product();
        let patch = self.weight.shape()[1];
        let n = self.out_features;
        assert_eq!(matrix.shape(), &[patch, n]);
        assert_eq!(bias.len(), n);
        for l in 0..locations {
            self.weight.data_mut()[l * patch * n..(l + 1) * patch * n]
                .copy_from_slice(matrix.data());
            self.bias.data_mut()[l * n..(l + 1) * n].copy_from_slice(bias);
        }
    }
}

impl<S: Scalar> Layer<S> for LocallyConnected<S> {
    fn forward(&mut self, x: &Tensor<S>, save: bool) -> Result<Tensor<S>> {
        let rank = x.rank();
        if &x.shape()[1..rank - 1] != self.spatial.as_slice()
            || x.shape()[rank - 1] != self.in_features
        {
            return Err(TensorError::ShapeMismatch {
                left: x.shape().to_vec(),
                right: self.spatial.clone(),
                context: "locally connected input spatial/feature shape",
            });
        }
        let patches = self.gather.forward(x, save)?;
        let b = x.shape()[0];
        let locations: usize = self.spatial.iter().product();
        let patch = self.weight.shape()[1];
        let n = self.out_features;
        let mut out_shape = x.shape().to_vec();
        out_shape[rank - 1] = n;
        let mut out = Tensor::zeros(&out_shape);
        let od = out.data_mut();
        let pd = patches.data();
        let wd = self.weight.data();
        let bd = self.bias.data();
        for bi in 0..b {
            for l in 0..locations {
                let p = &pd[(bi * locations + l) * patch..(bi * locations + l + 1) * patch];
                let w = &wd[l * patch * n..(l + 1) * patch * n];
                let o = &mut od[(bi * locations + l) * n..(bi * locations + l + 1) * n];
                o.copy_from_slice(&bd[l * n..(l + 1) * n]);
                for (pi, &pv) in p.iter().enumerate() {
                    let wrow = &w[pi * n..(pi + 1) * n];
                    for (ov, &wv) in o.iter_mut().zip(wrow) {
                        *ov += pv * wv;
                    }
                }
            }
        }
        if save {
            self.saved.push(patches);
        }
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let patches = self.saved.pop().expect("backward without matching forward");
        let locations: usize = self.spatial.iter().product();
        let patch = self.weight.shape()[1];
        let n = self.out_features;
        let b = patches.shape()[0];
        if grad_out.len() != b * locations * n {
            return Err(TensorError::ShapeMismatch {
                left: grad_out.shape().to_vec(),
                right: vec![b, locations, n],
                context: "locally connected backward grad shape",
            });
        }
        let mut grad_patches = Tensor::zeros(patches.shape());
        let gpd = grad_patches.data_mut();
        let pd = patches.data();
        let gd = grad_out.data();
        let wd = self.weight.data();
        let gwd = self.grad_w.data_mut();
        let gbd = self.grad_b.data_mut();
        for bi in 0..b {
            for l in 0..locations {
                let base = (bi * locations + l) * patch;
                let g = &gd[(bi * locations + l) * n..(bi * locations + l + 1) * n];
                for (gb, &gv) in gbd[l * n..(l + 1) * n].iter_mut().zip(g) {
                    *gb += gv;
                }
                let w = &wd[l * patch * n..(l + 1) * patch * n];
                let gw = &mut gwd[l * patch * n..(l + 1) * patch * n];
                for pi in 0..patch {
                    let pv = pd[base + pi];
                    let wrow = &w[pi * n..(pi + 1) * n];
                    let gwrow = &mut gw[pi * n..(pi + 1) * n];
                    let mut acc = S::zero();
                    for ((&gv, &wv), gwv) in g.iter().zip(wrow).zip(gwrow.iter_mut()) {
                        *gwv += pv * gv;
                        acc += gv * wv;
                    }
                    gpd[base + pi] = acc;
                }
            }
        }
        self.gather.backward(&grad_patches)
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
        self.gather.clear_saved();
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Conv, ConvSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_matrices_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lc = LocallyConnected::<f64>::new(&[5], 1, 3, 3, &mut rng);
        lc.set_identity();
        let x = Tensor::from_fn(&[2, 5, 3], |i| (i[0] + 2 * i[1] + 3 * i[2]) as f64);
        assert_eq!(lc.forward(&x, false).unwrap(), x);
    }

    #[test]
    fn parameter_count_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // Spatial 64x64, m_in = n_out = 8, s = 1: 64*64*(8*8 + 8) = 294,912.
        let lc = LocallyConnected::<f64>::new(&[64, 64], 1, 8, 8, &mut rng);
        assert_eq!(lc.param_count(), 294_912);
    }

    #[test]
    fn equal_matrices_match_convolution() {
        // With all location matrices equal, the layer is a kernel-s conv
        // over a single "frame".
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lc = LocallyConnected::<f64>::new(&[6], 3, 2, 4, &mut rng);
        let mut conv = Conv::<f64>::new(ConvSpec::new(2, 4, &[1, 3], 1), &mut rng);
        lc.broadcast_location(conv.weight(), &[0.1, -0.2, 0.3, 0.4]);
        let mut bias = Tensor::zeros(&[4]);
        bias.data_mut().copy_from_slice(&[0.1, -0.2, 0.3, 0.4]);
        conv.visit_params("", &mut |name, value, _| {
            if name.ends_with("bias") {
                *value = bias.clone();
            }
        });
        let x = Tensor::from_fn(&[2, 6, 2], |i| ((i[0] * 12 + i[1] * 2 + i[2]) as f64).sin());
        let got = lc.forward(&x, false).unwrap();
        // Conv input needs a time axis of length 1.
        let xc = x.reshape(&[2, 1, 6, 2]).unwrap();
        let want = conv.forward(&xc, false).unwrap().reshape(&[2, 6, 4]).unwrap();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_spatial_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut lc = LocallyConnected::<f64>::new(&[5], 1, 3, 3, &mut rng);
        assert!(lc.forward(&Tensor::zeros(&[1, 4, 3]), false).is_err());
    }
}
