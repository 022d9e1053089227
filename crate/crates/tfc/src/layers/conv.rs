use super::{glorot_uniform, join, Layer, ParamVisitor};
use crate::tensor::{Result, Scalar, Tensor, TensorError};
use crate::util;
use rand::Rng;
use rayon::prelude::*;

/// (D+1)-dimensional convolution over `[batch, time, spatial.., features]`
/// input. The stride applies to the time axis only; all axes use "same"
/// padding, so spatial lengths are preserved and the time length becomes
/// `ceil(T / stride)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_features: usize,
    pub out_features: usize,
    /// Kernel sizes, time first, then spatial axes (length D+1).
    pub kernel: Vec<usize>,
    pub time_stride: usize,
}

impl ConvSpec {
    pub fn new(in_features: usize, out_features: usize, kernel: &[usize], time_stride: usize) -> Self {
        assert!(kernel.iter().all(|&k| k >= 1), "kernel sizes must be >= 1");
        assert!(time_stride >= 1, "stride must be >= 1");
        Self {
            in_features,
            out_features,
            kernel: kernel.to_vec(),
            time_stride,
        }
    }

    /// Patch length: product of kernel sizes times input features.
    pub fn patch_len(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.in_features
    }

    pub fn param_count(&self) -> usize {
        self.patch_len() * self.out_features + self.out_features
    }
}

/// "same" padding for a strided axis: the output length is `ceil(len / s)`
/// and the total padding `(out-1)*s + k - len` is split with the smaller
/// half in front. For `s = 1` this is `k - 1` total with `floor((k-1)/2)`
/// before.
pub fn same_padding(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(len);
    (total / 2, total - total / 2)
}

pub struct Conv<S: Scalar> {
    pub spec: ConvSpec,
    weight: Tensor<S>, // [patch_len, out_features], patch offset-major, feature-minor
    bias: Tensor<S>,   // [out_features]
    grad_w: Tensor<S>,
    grad_b: Tensor<S>,
    saved: Vec<Tensor<S>>,
}

impl<S: Scalar> Conv<S> {
    pub fn new(spec: ConvSpec, rng: &mut impl Rng) -> Self {
        let k: usize = spec.kernel.iter().product();
        let weight = glorot_uniform(
            &[spec.patch_len(), spec.out_features],
            spec.patch_len(),
            k * spec.out_features,
            rng,
        );
        let grad_w = Tensor::zeros(weight.shape());
        Self {
            bias: Tensor::zeros(&[spec.out_features]),
            grad_b: Tensor::zeros(&[spec.out_features]),
            weight,
            grad_w,
            spec,
            saved: Vec::new(),
        }
    }

    pub fn set_weight(&mut self, w: Tensor<S>) {
        assert_eq!(w.shape(), self.weight.shape());
        self.weight = w;
    }

    pub fn weight(&self) -> &Tensor<S> {
        &self.weight
    }

    fn geometry(&self, shape: &[usize]) -> Result<Geometry> {
        let rank = shape.len();
        if rank < 4 || rank > 5 || shape[rank - 1] != self.spec.in_features {
            return Err(TensorError::ShapeMismatch {
                left: shape.to_vec(),
                right: self.spec.kernel.clone(),
                context: "conv input must be [batch, time, spatial.., in_features]",
            });
        }
        if self.spec.kernel.len() != rank - 2 {
            return Err(TensorError::ShapeMismatch {
                left: shape.to_vec(),
                right: self.spec.kernel.clone(),
                context: "conv kernel rank",
            });
        }
        Ok(Geometry {
            batch: shape[0],
            time: shape[1],
            spatial: shape[2..rank - 1].to_vec(),
            features: shape[rank - 1],
            t_out: shape[1].div_ceil(self.spec.time_stride),
        })
    }
}

struct Geometry {
    batch: usize,
    time: usize,
    spatial: Vec<usize>,
    features: usize,
    t_out: usize,
}

impl Geometry {
    fn spatial_count(&self) -> usize {
        self.spatial.iter().product()
    }

    fn rows(&self) -> usize {
        self.t_out * self.spatial_count()
    }

    fn sample_in(&self) -> usize {
        self.time * self.spatial_count() * self.features
    }
}

/// Padded-buffer geometry for the shift-gemm convolution: the sample is
/// copied once into a zero-padded buffer and each kernel tap becomes one
/// accumulating gemm at a constant row offset, so no patch matrix is ever
/// materialized. 1-D inputs are treated as `h = 1`.
struct PadGeo {
    time: usize,
    t_out: usize,
    s: usize,
    kt: usize,
    kh: usize,
    kw: usize,
    h: usize,
    w: usize,
    m: usize,
    pt: usize,
    ph: usize,
    pw: usize,
    /// Padded plane height/width and padded time rows.
    hp: usize,
    wp: usize,
    tp: usize,
}

impl PadGeo {
    fn new(geo: &Geometry, spec: &ConvSpec) -> Self {
        let (h, w, kh, kw) = match geo.spatial.len() {
            1 => (1, geo.spatial[0], 1, spec.kernel[1]),
            2 => (geo.spatial[0], geo.spatial[1], spec.kernel[1], spec.kernel[2]),
            d => unreachable!("unsupported spatial rank {d}"),
        };
        let s = spec.time_stride;
        let kt = spec.kernel[0];
        let (pt, _) = same_padding(geo.time, kt, s);
        let (ph, _) = same_padding(h, kh, 1);
        let (pw, _) = same_padding(w, kw, 1);
        PadGeo {
            time: geo.time,
            t_out: geo.t_out,
            s,
            kt,
            kh,
            kw,
            h,
            w,
            m: geo.features,
            pt,
            ph,
            pw,
            hp: h + kh - 1,
            wp: w + kw - 1,
            tp: (geo.t_out - 1) * s + kt,
        }
    }

    /// Rows per padded time slice.
    fn plane(&self) -> usize {
        self.hp * self.wp
    }

    /// Extra zero rows past the end so the largest tap shift applied to the
    /// last output row still reads in bounds.
    fn slack(&self) -> usize {
        (self.kh - 1) * self.wp + (self.kw - 1)
    }

    /// Padded input length in elements (features `m` per row).
    fn x_pad_len(&self) -> usize {
        (self.tp * self.plane() + self.slack()) * self.m
    }

    /// Padded output length in elements (`n` per row); used as a gemm
    /// destination without shifts in the forward pass and, with shifts, as
    /// the input-gradient accumulator in the backward pass.
    fn out_pad_len(&self, n: usize) -> usize {
        (self.t_out * self.plane() + self.slack()) * n
    }

    /// Row shift (in rows) of tap `(it, ih, iw)` within one time slice.
    fn tap_shift(&self, ih: usize, iw: usize) -> usize {
        ih * self.wp + iw
    }
}

/// Copies one sample `[time, h, w, m]` into the zero-padded buffer, leaving
/// `pt/ph/pw` zero rows/columns in front. When the time kernel is shorter
/// than the stride the last input slices fall past every window; they are
/// simply not copied (and correspondingly receive zero input gradient).
fn pad_sample<S: Scalar>(x: &[S], pg: &PadGeo, out: &mut [S]) {
    out.fill(S::zero());
    let m = pg.m;
    let t_used = pg.time.min(pg.tp - pg.pt);
    for t in 0..t_used {
        for y in 0..pg.h {
            let src = (t * pg.h + y) * pg.w * m;
            let dst = (((t + pg.pt) * pg.hp + y + pg.ph) * pg.wp + pg.pw) * m;
            out[dst..dst + pg.w * m].copy_from_slice(&x[src..src + pg.w * m]);
        }
    }
}

impl<S: Scalar> Layer<S> for Conv<S> {
    fn forward(&mut self, x: &Tensor<S>, save: bool) -> Result<Tensor<S>> {
        let geo = self.geometry(x.shape())?;
        let rows = geo.rows();
        let n = self.spec.out_features;
        let mut out_shape = vec![geo.batch, geo.t_out];
        out_shape.extend_from_slice(&geo.spatial);
        out_shape.push(n);
        let mut out = Tensor::zeros(&out_shape);
        let weight = self.weight.data();
        let bias = self.bias.data();
        let pg = PadGeo::new(&geo, &self.spec);
        let m = pg.m;
        let plane = pg.plane();
        util::pool().install(|| {
            out.data_mut()
                .par_chunks_mut(rows * n)
                .zip(x.data().par_chunks(geo.sample_in()))
                .for_each_init(
                    || {
                        (
                            vec![S::zero(); pg.x_pad_len()],
                            vec![S::zero(); pg.out_pad_len(n)],
                        )
                    },
                    |(x_pad, out_pad), (out_s, x_s)| {
                        pad_sample(x_s, &pg, x_pad);
                        out_pad.fill(S::zero());
                        for it in 0..pg.kt {
                            for ih in 0..pg.kh {
                                for iw in 0..pg.kw {
                                    let tap = (it * pg.kh + ih) * pg.kw + iw;
                                    let w_off = weight[tap * m * n..].as_ptr();
                                    let d_sp = pg.tap_shift(ih, iw);
                                    unsafe {
                                        if pg.s == 1 {
                                            let shift = (it * plane + d_sp) * m;
                                            S::gemm(
                                                pg.t_out * plane,
                                                m,
                                                n,
                                                out_pad.as_mut_ptr(),
                                                x_pad[shift..].as_ptr(),
                                                w_off,
                                                S::one(),
                                                S::one(),
                                            );
                                        } else {
                                            for to in 0..pg.t_out {
                                                let shift =
                                                    ((to * pg.s + it) * plane + d_sp) * m;
                                                S::gemm(
                                                    plane,
                                                    m,
                                                    n,
                                                    out_pad[to * plane * n..].as_mut_ptr(),
                                                    x_pad[shift..].as_ptr(),
                                                    w_off,
                                                    S::one(),
                                                    S::one(),
                                                );
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        for to in 0..pg.t_out {
                            for y in 0..pg.h {
                                let src = (to * pg.hp + y) * pg.wp * n;
                                let dst = (to * pg.h + y) * pg.w * n;
                                let row = &mut out_s[dst..dst + pg.w * n];
                                row.copy_from_slice(&out_pad[src..src + pg.w * n]);
                                for chunk in row.chunks_mut(n) {
                                    for (v, &b) in chunk.iter_mut().zip(bias) {
                                        *v += b;
                                    }
                                }
                            }
                        }
                    },
                );
        });
        if save {
            self.saved.push(x.clone());
        }
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let x = self.saved.pop().expect("backward without matching forward");
        let geo = self.geometry(x.shape())?;
        let rows = geo.rows();
        let k = self.spec.patch_len();
        let n = self.spec.out_features;
        if grad_out.len() != geo.batch * rows * n {
            return Err(TensorError::ShapeMismatch {
                left: grad_out.shape().to_vec(),
                right: x.shape().to_vec(),
                context: "conv backward grad shape",
            });
        }
        for row in grad_out.data().chunks(n) {
            for (gb, &g) in self.grad_b.data_mut().iter_mut().zip(row) {
                *gb += g;
            }
        }
        let mut grad_x = Tensor::zeros(x.shape());
        let weight = self.weight.data();
        let pg = PadGeo::new(&geo, &self.spec);
        let m = pg.m;
        let plane = pg.plane();
        // Per-sample weight-gradient contributions are reduced sequentially
        // afterwards so the result does not depend on thread scheduling.
        let contribs: Vec<Vec<S>> = util::pool().install(|| {
            grad_x
                .data_mut()
                .par_chunks_mut(geo.sample_in())
                .zip(x.data().par_chunks(geo.sample_in()))
                .zip(grad_out.data().par_chunks(rows * n))
                .map_init(
                    || {
                        (
                            vec![S::zero(); pg.x_pad_len()],
                            vec![S::zero(); pg.out_pad_len(n)],
                            vec![S::zero(); pg.x_pad_len()],
                        )
                    },
                    |(x_pad, g_pad, gx_pad), ((gx_s, x_s), g_s)| {
                        pad_sample(x_s, &pg, x_pad);
                        // Scatter the output gradient into the padded layout;
                        // junk lanes stay zero so they contribute nothing.
                        g_pad.fill(S::zero());
                        for to in 0..pg.t_out {
                            for y in 0..pg.h {
                                let src = (to * pg.h + y) * pg.w * n;
                                let dst = (to * pg.hp + y) * pg.wp * n;
                                g_pad[dst..dst + pg.w * n]
                                    .copy_from_slice(&g_s[src..src + pg.w * n]);
                            }
                        }
                        gx_pad.fill(S::zero());
                        let mut gw = vec![S::zero(); k * n];
                        for it in 0..pg.kt {
                            for ih in 0..pg.kh {
                                for iw in 0..pg.kw {
                                    let tap = (it * pg.kh + ih) * pg.kw + iw;
                                    let d_sp = pg.tap_shift(ih, iw);
                                    let gemm_pair = |to0: usize, rows_g: usize,
                                                     gw: &mut [S],
                                                     gx_pad: &mut [S]| {
                                        let shift = ((to0 * pg.s + it) * plane + d_sp) * m;
                                        let g_ptr = g_pad[to0 * plane * n..].as_ptr();
                                        unsafe {
                                            // gw_tap += x_pad_shifted^T @ g_pad
                                            S::gemm_strided(
                                                m,
                                                rows_g,
                                                n,
                                                gw[tap * m * n..].as_mut_ptr(),
                                                x_pad[shift..].as_ptr(),
                                                1,
                                                m as isize,
                                                g_ptr,
                                                n as isize,
                                                1,
                                                S::one(),
                                                S::one(),
                                            );
                                            // gx_pad_shifted += g_pad @ W_tap^T
                                            S::gemm_strided(
                                                rows_g,
                                                n,
                                                m,
                                                gx_pad[shift..].as_mut_ptr(),
                                                g_ptr,
                                                n as isize,
                                                1,
                                                weight[tap * m * n..].as_ptr(),
                                                1,
                                                n as isize,
                                                S::one(),
                                                S::one(),
                                            );
                                        }
                                    };
                                    if pg.s == 1 {
                                        // With unit stride the shift is
                                        // constant across time slices; one
                                        // gemm covers the whole unroll.
                                        gemm_pair(0, pg.t_out * plane, &mut gw, gx_pad);
                                    } else {
                                        for to in 0..pg.t_out {
                                            gemm_pair(to, plane, &mut gw, gx_pad);
                                        }
                                    }
                                }
                            }
                        }
                        // Crop the padded input gradient back to the sample;
                        // slices past the last window keep their zero grad.
                        let t_used = pg.time.min(pg.tp - pg.pt);
                        for t in 0..t_used {
                            for y in 0..pg.h {
                                let src =
                                    (((t + pg.pt) * pg.hp + y + pg.ph) * pg.wp + pg.pw) * m;
                                let dst = (t * pg.h + y) * pg.w * m;
                                gx_s[dst..dst + pg.w * m]
                                    .copy_from_slice(&gx_pad[src..src + pg.w * m]);
                            }
                        }
                        gw
                    },
                )
                .collect()
        });
        for gw in contribs {
            for (acc, v) in self.grad_w.data_mut().iter_mut().zip(gw) {
                *acc += v;
            }
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
        self.spec.param_count()
    }
}
