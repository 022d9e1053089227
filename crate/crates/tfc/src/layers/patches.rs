use super::{same_padding, Layer, ParamVisitor};
use crate::tensor::{Result, Scalar, Tensor, TensorError};

/// Neighborhood gather over `[batch, spatial.., features]` input with zero
/// padding ("same"): every spatial location's feature axis is replaced by
/// the concatenation of its `k^D` neighborhood, offset-major (offsets
/// enumerated row-major from most negative to most positive) and
/// feature-minor. Strides and rates are fixed at one.
pub struct ExtractPatches<S: Scalar> {
    pub k: usize,
    saved_shapes: Vec<Vec<usize>>,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> ExtractPatches<S> {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "patch size must be >= 1 (r = 0 is handled by omitting the branch)");
        Self {
            k,
            saved_shapes: Vec::new(),
            _marker: std::marker::PhantomData,
        }
    }

    fn check(&self, shape: &[usize]) -> Result<()> {
        if shape.len() < 3 || shape.len() > 4 {
            return Err(TensorError::ShapeMismatch {
                left: shape.to_vec(),
                right: vec![],
                context: "extract_patches input must be [batch, spatial.., features]",
            });
        }
        Ok(())
    }
}

impl<S: Scalar> Layer<S> for ExtractPatches<S> {
    fn forward(&mut self, x: &Tensor<S>, save: bool) -> Result<Tensor<S>> {
        self.check(x.shape())?;
        let shape = x.shape();
        let rank = shape.len();
        let b = shape[0];
        let m = shape[rank - 1];
        let k = self.k;
        let out = match rank {
            3 => {
                let w = shape[1];
                let (pw, _) = same_padding(w, k, 1);
                let mut out = Tensor::zeros(&[b, w, k * m]);
                let od = out.data_mut();
                let xd = x.data();
                let mut o = 0usize;
                for bi in 0..b {
                    for xx in 0..w {
                        for iw in 0..k {
                            let xi = (xx + iw) as isize - pw as isize;
                            if xi >= 0 && xi < w as isize {
                                let src = (bi * w + xi as usize) * m;
                                od[o..o + m].copy_from_slice(&xd[src..src + m]);
                            }
                            o += m;
                        }
                    }
                }
                out
            }
            4 => {
                let (h, w) = (shape[1], shape[2]);
                let (ph, _) = same_padding(h, k, 1);
                let (pw, _) = same_padding(w, k, 1);
                let mut out = Tensor::zeros(&[b, h, w, k * k * m]);
                let od = out.data_mut();
                let xd = x.data();
                let mut o = 0usize;
                for bi in 0..b {
                    for yy in 0..h {
                        for xx in 0..w {
                            for ih in 0..k {
                                let yi = (yy + ih) as isize - ph as isize;
                                if yi < 0 || yi >= h as isize {
                                    o += k * m;
                                    continue;
                                }
                                for iw in 0..k {
                                    let xi = (xx + iw) as isize - pw as isize;
                                    if xi >= 0 && xi < w as isize {
                                        let src = ((bi * h + yi as usize) * w + xi as usize) * m;
                                        od[o..o + m].copy_from_slice(&xd[src..src + m]);
                                    }
                                    o += m;
                                }
                            }
                        }
                    }
                }
                out
            }
            _ => unreachable!(),
        };
        if save {
            self.saved_shapes.push(shape.to_vec());
        }
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let shape = self
            .saved_shapes
            .pop()
            .expect("backward without matching forward");
        let rank = shape.len();
        let b = shape[0];
        let m = shape[rank - 1];
        let k = self.k;
        let mut gx = Tensor::zeros(&shape);
        let gxd = gx.data_mut();
        let gd = grad_out.data();
        match rank {
            3 => {
                let w = shape[1];
                let (pw, _) = same_padding(w, k, 1);
                let mut o = 0usize;
                for bi in 0..b {
                    for xx in 0..w {
                        for iw in 0..k {
                            let xi = (xx + iw) as isize - pw as isize;
                            if xi >= 0 && xi < w as isize {
                                let dst = (bi * w + xi as usize) * m;
                                for c in 0..m {
                                    gxd[dst + c] += gd[o + c];
                                }
                            }
                            o += m;
                        }
                    }
                }
            }
            4 => {
                let (h, w) = (shape[1], shape[2]);
                let (ph, _) = same_padding(h, k, 1);
                let (pw, _) = same_padding(w, k, 1);
                let mut o = 0usize;
                for bi in 0..b {
                    for yy in 0..h {
                        for xx in 0..w {
                            for ih in 0..k {
                                let yi = (yy + ih) as isize - ph as isize;
                                if yi < 0 || yi >= h as isize {
                                    o += k * m;
                                    continue;
                                }
                                for iw in 0..k {
                                    let xi = (xx + iw) as isize - pw as isize;
                                    if xi >= 0 && xi < w as isize {
                                        let dst = ((bi * h + yi as usize) * w + xi as usize) * m;
                                        for c in 0..m {
                                            gxd[dst + c] += gd[o + c];
                                        }
                                    }
                                    o += m;
                                }
                            }
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(gx)
    }

    fn visit_params(&mut self, _prefix: &str, _f: &mut ParamVisitor<'_, S>) {}

    fn clear_saved(&mut self) {
        self.saved_shapes.clear();
    }
}
