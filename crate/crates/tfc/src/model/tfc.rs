use super::{Incriminator, ModelError, ResidualBlock, Result};
use crate::layers::{Activation, ActivationLayer, Layer, ParamVisitor, PointwiseAffine};
use crate::tensor::{Scalar, Tensor};

/// Classifier head: flatten, fc, relu, fc; softmax is applied statelessly by
/// the caller-facing API so training can inject the combined
/// softmax-plus-loss gradient at the logits.
pub(super) struct ClassifierHead<S: Scalar> {
    pub fc_a: PointwiseAffine<S>,
    pub act: ActivationLayer<S>,
    pub fc_b: PointwiseAffine<S>,
    /// Pre-flatten shapes for backward.
    saved_flatten: Vec<Vec<usize>>,
}

impl<S: Scalar> ClassifierHead<S> {
    fn forward_logits(&mut self, z: &Tensor<S>, save: bool) -> crate::tensor::Result<Tensor<S>> {
        let flat = z.reshape(&[z.shape()[0], z.len() / z.shape()[0]])?;
        if save {
            self.saved_flatten.push(z.shape().to_vec());
        }
        let h = self.fc_a.forward(&flat, save)?;
        let h = self.act.forward(&h, save)?;
        self.fc_b.forward(&h, save)
    }

    fn backward_logits(&mut self, grad: &Tensor<S>) -> crate::tensor::Result<Tensor<S>> {
        let g = self.fc_b.backward(grad)?;
        let g = self.act.backward(&g)?;
        let g = self.fc_a.backward(&g)?;
        let shape = self.saved_flatten.pop().expect("backward without forward");
        g.into_reshape(&shape)
    }
}

/// The assembled network: residual block, incriminator, final activation,
/// and an optional classifier head.
pub struct TfcModel<S: Scalar> {
    pub name: String,
    /// Spatial dimensionality D of one frame (1 or 2).
    pub d: usize,
    pub window_len: usize,
    pub in_features: usize,
    pub spatial: Vec<usize>,
    pub block: ResidualBlock<S>,
    pub incriminator: Incriminator<S>,
    final_act: ActivationLayer<S>,
    pub(super) head: Option<ClassifierHead<S>>,
    /// Time length left after the block on the configured window (1 for
    /// forecasters; may exceed 1 in classifier mode).
    pub folded_time: usize,
}

impl<S: Scalar> TfcModel<S> {
    #[allow(clippy::too_many_arguments)]
    pub(super) fn assemble(
        name: String,
        d: usize,
        window_len: usize,
        in_features: usize,
        spatial: Vec<usize>,
        block: ResidualBlock<S>,
        incriminator: Incriminator<S>,
        head: Option<ClassifierHead<S>>,
        folded_time: usize,
    ) -> Self {
        Self {
            name,
            d,
            window_len,
            in_features,
            spatial,
            block,
            incriminator,
            final_act: ActivationLayer::new(Activation::Tanh),
            head,
            folded_time,
        }
    }

    pub fn is_classifier(&self) -> bool {
        self.head.is_some()
    }

    pub fn window_shape(&self, batch: usize) -> Vec<usize> {
        let mut s = vec![batch, self.window_len];
        s.extend_from_slice(&self.spatial);
        s.push(self.in_features);
        s
    }

    fn check_window(&self, window: &Tensor<S>) -> Result<()> {
        let expected = self.window_shape(window.shape()[0]);
        if window.shape() != expected.as_slice() {
            return Err(ModelError::WindowShape {
                expected,
                actual: window.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Predicts the next frame: tanh(incriminator(x_t, block(window))).
    /// Output shape `[batch, spatial.., m]`, values in (-1, 1).
    pub fn forecast_one(&mut self, window: &Tensor<S>, save: bool) -> Result<Tensor<S>> {
        self.check_window(window)?;
        let x_t = window.index_axis(1, self.window_len - 1)?;
        let summary = self.block.forward(window, save)?;
        let z = self.incriminator.forward(&x_t, &summary, save)?;
        Ok(self.final_act.forward(&z, save)?)
    }

    /// Reverse of [`forecast_one`]: gradient with respect to the window.
    /// The frame-branch gradient lands on the window's last frame in
    /// addition to whatever the block routed there.
    pub fn backward_one(&mut self, grad_pred: &Tensor<S>) -> Result<Tensor<S>> {
        let g = self.final_act.backward(grad_pred)?;
        let (grad_x, grad_summary) = self.incriminator.backward(&g)?;
        let mut grad_window = self.block.backward(&grad_summary)?;
        if let Some(gx) = grad_x {
            add_frame(&mut grad_window, self.window_len - 1, &gx);
        }
        Ok(grad_window)
    }

    /// Serial chaining: each step drops the window's first frame, appends
    /// the previous prediction and forecasts again.
    pub fn forecast_serial(&mut self, window: &Tensor<S>, k: usize) -> Result<Vec<Tensor<S>>> {
        self.forecast_chain(window, k, false)
    }

    /// Same chaining with activations optionally saved for
    /// [`backward_chain`]; parameters are shared across all steps.
    pub fn forecast_chain(
        &mut self,
        window: &Tensor<S>,
        k: usize,
        save: bool,
    ) -> Result<Vec<Tensor<S>>> {
        assert!(k >= 1);
        let mut preds = Vec::with_capacity(k);
        let mut current = window.clone();
        for step in 0..k {
            let y = self.forecast_one(&current, save)?;
            if step + 1 < k {
                current = shift_append(&current, &y)?;
            }
            preds.push(y);
        }
        Ok(preds)
    }

    /// Reverse of a `forecast_chain(.., save = true)` call. `grad_preds[j]`
    /// is the loss gradient of step `j`'s prediction; gradients accumulate
    /// across the unroll into the shared parameters. Returns the gradient
    /// with respect to the original window.
    pub fn backward_chain(&mut self, grad_preds: &[Tensor<S>]) -> Result<Tensor<S>> {
        let k = grad_preds.len();
        assert!(k >= 1);
        let t = self.window_len;
        let batch = grad_preds[0].shape()[0];
        let mut pending = grad_preds.to_vec();
        let mut grad_input = Tensor::zeros(&self.window_shape(batch));
        for j in (0..k).rev() {
            let grad_window = self.backward_one(&pending[j])?;
            // Frame p of step j's window is original frame j+p when that
            // index is below t, otherwise prediction j+p-t of an earlier
            // step; route the gradient accordingly.
            for p in 0..t {
                let source = j + p;
                let frame = frame_slice(&grad_window, p);
                if source < t {
                    accumulate_frame(&mut grad_input, source, frame);
                } else {
                    let dest = pending[source - t].data_mut();
                    for (d, s) in dest.iter_mut().zip(frame_iter(frame)) {
                        *d = *d + s;
                    }
                }
            }
        }
        Ok(grad_input)
    }

    /// Classifies one image batch; the first image axis plays the time role.
    /// Returns per-class probabilities summing to 1.
    pub fn classify(&mut self, image: &Tensor<S>, save: bool) -> Result<Tensor<S>> {
        let logits = self.classify_logits(image, save)?;
        Ok(ActivationLayer::apply(Activation::Softmax, &logits))
    }

    /// Pre-softmax logits, for losses that fold softmax into their gradient.
    pub fn classify_logits(&mut self, image: &Tensor<S>, save: bool) -> Result<Tensor<S>> {
        if self.head.is_none() {
            return Err(ModelError::HeadAbsent);
        }
        self.check_window(image)?;
        let x_t = image.index_axis(1, self.window_len - 1)?;
        let summary = self.block.forward(image, save)?;
        let merged = merge_time_into_features(&summary, self.folded_time)?;
        let z = self.incriminator.forward(&x_t, &merged, save)?;
        let head = self.head.as_mut().expect("checked above");
        Ok(head.forward_logits(&z, save)?)
    }

    /// Reverse of [`classify_logits`]; takes the gradient at the logits.
    pub fn backward_classify(&mut self, grad_logits: &Tensor<S>) -> Result<Tensor<S>> {
        let head = self.head.as_mut().ok_or(ModelError::HeadAbsent)?;
        let g = head.backward_logits(grad_logits)?;
        let (grad_x, grad_merged) = self.incriminator.backward(&g)?;
        let grad_summary = split_time_from_features(&grad_merged, self.folded_time)?;
        let mut grad_image = self.block.backward(&grad_summary)?;
        if let Some(gx) = grad_x {
            add_frame(&mut grad_image, self.window_len - 1, &gx);
        }
        Ok(grad_image)
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_, S>) {
        self.block.visit_params("block", f);
        self.incriminator.visit_params("incriminator", f);
        if let Some(head) = &mut self.head {
            head.fc_a.visit_params("head.fc_a", f);
            head.fc_b.visit_params("head.fc_b", f);
        }
    }

    pub fn zero_grads(&mut self) {
        self.block.zero_grads();
        self.incriminator.zero_grads();
        if let Some(head) = &mut self.head {
            head.fc_a.zero_grads();
            head.fc_b.zero_grads();
        }
    }

    pub fn clear_saved(&mut self) {
        self.block.clear_saved();
        self.incriminator.clear_saved();
        self.final_act.clear_saved();
        if let Some(head) = &mut self.head {
            head.fc_a.clear_saved();
            head.act.clear_saved();
            head.fc_b.clear_saved();
            head.saved_flatten.clear();
        }
    }

    pub fn param_count(&self) -> usize {
        self.block.param_count()
            + self.incriminator.param_count()
            + self.head.as_ref().map_or(0, |h| {
                h.fc_a.param_count() + h.fc_b.param_count()
            })
    }
}

impl<S: Scalar> ClassifierHead<S> {
    pub(super) fn new(fc_a: PointwiseAffine<S>, fc_b: PointwiseAffine<S>) -> Self {
        Self {
            fc_a,
            act: ActivationLayer::new(Activation::Relu),
            fc_b,
            saved_flatten: Vec::new(),
        }
    }
}

/// Window advance: drops the first frame and appends `frame` at the end.
pub fn shift_append<S: Scalar>(window: &Tensor<S>, frame: &Tensor<S>) -> Result<Tensor<S>> {
    let t = window.shape()[1];
    let batch = window.shape()[0];
    let frame_len = window.len() / (batch * t);
    assert_eq!(frame.len(), batch * frame_len, "frame shape mismatch");
    let mut out = window.clone();
    {
        let data = out.data_mut();
        for b in 0..batch {
            let base = b * t * frame_len;
            data.copy_within(base + frame_len..base + t * frame_len, base);
            data[base + (t - 1) * frame_len..base + t * frame_len]
                .copy_from_slice(&frame.data()[b * frame_len..(b + 1) * frame_len]);
        }
    }
    Ok(out)
}

/// Borrowed view of frame `p` of every batch element, as (per-batch chunks).
struct FrameSlice<'a, S> {
    data: &'a [S],
    batch: usize,
    t: usize,
    frame_len: usize,
    p: usize,
}

fn frame_slice<S: Scalar>(window: &Tensor<S>, p: usize) -> FrameSlice<'_, S> {
    let batch = window.shape()[0];
    let t = window.shape()[1];
    FrameSlice {
        data: window.data(),
        batch,
        t,
        frame_len: window.len() / (batch * t),
        p,
    }
}

fn frame_iter<'a, S: Scalar>(f: FrameSlice<'a, S>) -> impl Iterator<Item = S> + 'a {
    (0..f.batch).flat_map(move |b| {
        let base = (b * f.t + f.p) * f.frame_len;
        f.data[base..base + f.frame_len].iter().copied()
    })
}

fn accumulate_frame<S: Scalar>(window: &mut Tensor<S>, p: usize, src: FrameSlice<'_, S>) {
    let batch = window.shape()[0];
    let t = window.shape()[1];
    let frame_len = window.len() / (batch * t);
    let data = window.data_mut();
    let mut it = frame_iter(src);
    for b in 0..batch {
        let base = (b * t + p) * frame_len;
        for v in &mut data[base..base + frame_len] {
            *v = *v + it.next().expect("frame sizes agree");
        }
    }
}

/// Adds a `[batch, spatial.., m]` gradient onto frame `p` of a window
/// gradient.
fn add_frame<S: Scalar>(window: &mut Tensor<S>, p: usize, frame: &Tensor<S>) {
    let batch = window.shape()[0];
    let t = window.shape()[1];
    let frame_len = window.len() / (batch * t);
    assert_eq!(frame.len(), batch * frame_len);
    let data = window.data_mut();
    for b in 0..batch {
        let base = (b * t + p) * frame_len;
        for (d, s) in data[base..base + frame_len]
            .iter_mut()
            .zip(&frame.data()[b * frame_len..(b + 1) * frame_len])
        {
            *d = *d + *s;
        }
    }
}

/// `[batch, t, spatial.., n]` -> `[batch, spatial.., t*n]`: a leftover time
/// axis becomes extra features so the incriminator can treat the summary as
/// a single frame.
fn merge_time_into_features<S: Scalar>(x: &Tensor<S>, folded_time: usize) -> Result<Tensor<S>> {
    if folded_time == 1 {
        return Ok(x.clone());
    }
    let rank = x.rank();
    let mut order: Vec<usize> = vec![0];
    order.extend(2..rank - 1);
    order.push(1);
    order.push(rank - 1);
    // [batch, spatial.., t, n] then the last two axes fuse.
    let moved = x.permute_axes(&order)?;
    let mut shape = moved.shape()[..rank - 2].to_vec();
    shape.push(moved.shape()[rank - 2] * moved.shape()[rank - 1]);
    Ok(moved.into_reshape(&shape)?)
}

/// Inverse of [`merge_time_into_features`] for gradients.
fn split_time_from_features<S: Scalar>(g: &Tensor<S>, folded_time: usize) -> Result<Tensor<S>> {
    if folded_time == 1 {
        return Ok(g.clone());
    }
    let rank = g.rank();
    let merged = g.shape()[rank - 1];
    let n = merged / folded_time;
    let mut shape = g.shape()[..rank - 1].to_vec();
    shape.push(folded_time);
    shape.push(n);
    let unfused = g.reshape(&shape)?;
    // Move the time axis back to position 1.
    let r = unfused.rank();
    let mut order: Vec<usize> = vec![0, r - 2];
    order.extend(1..r - 2);
    order.push(r - 1);
    Ok(unfused.permute_axes(&order)?)
}
