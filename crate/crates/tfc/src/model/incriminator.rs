use super::{ModelError, Result};
use crate::layers::{
    Activation, ActivationLayer, ExtractPatches, Layer, LocallyConnected, ParamVisitor,
    PointwiseAffine,
};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

/// Incriminator hyperparameters.
///
/// Per spatial location, an `r`-neighborhood of the last input frame and a
/// `t`-neighborhood of the block summary are concatenated and pushed through
/// two shared fully connected layers (width `n_hidden`, then `out_features`).
/// `r = 0` omits the frame branch entirely. The primed variant first runs the
/// block summary through a kernel-`s` locally connected layer that keeps its
/// feature count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncriminatorSpec {
    pub r: usize,
    pub t: usize,
    pub n_hidden: usize,
    pub primed: bool,
    /// Locally connected kernel; meaningful only when `primed`.
    pub s: usize,
    /// Output features m (one predicted frame's feature count).
    pub out_features: usize,
}

impl IncriminatorSpec {
    pub fn new(r: usize, t: usize, n_hidden: usize, out_features: usize) -> Self {
        Self {
            r,
            t,
            n_hidden,
            primed: false,
            s: 1,
            out_features,
        }
    }

    pub fn primed(r: usize, t: usize, s: usize, n_hidden: usize, out_features: usize) -> Self {
        Self {
            r,
            t,
            n_hidden,
            primed: true,
            s,
            out_features,
        }
    }

    /// Input columns of the first matrix: `r^D * m + t^D * n`.
    pub fn input_columns(&self, d: usize, x_features: usize, y_features: usize) -> usize {
        self.r.pow(d as u32) * x_features + self.t.pow(d as u32) * y_features
    }

    /// Analytic trainable-scalar count. `spatial` sizes the locally
    /// connected layer and may be empty for the plain variant.
    pub fn param_count(
        &self,
        d: usize,
        x_features: usize,
        y_features: usize,
        spatial: &[usize],
    ) -> usize {
        let cols = self.input_columns(d, x_features, y_features);
        let mut total = cols * self.n_hidden
            + self.n_hidden
            + self.n_hidden * self.out_features
            + self.out_features;
        if self.primed {
            let locations: usize = spatial.iter().product();
            let patch = self.s.pow(d as u32) * y_features;
            total += locations * (patch * y_features + y_features);
        }
        total
    }
}

/// Instantiated incriminator. Two inputs (last frame, block summary), one
/// output per spatial location; matrices are shared across locations.
pub struct Incriminator<S: Scalar> {
    pub spec: IncriminatorSpec,
    pub x_features: usize,
    pub y_features: usize,
    patches_x: Option<ExtractPatches<S>>,
    patches_y: ExtractPatches<S>,
    local: Option<LocallyConnected<S>>,
    fc1: PointwiseAffine<S>,
    act: ActivationLayer<S>,
    fc2: PointwiseAffine<S>,
    /// Feature-axis split point between the two patch branches.
    x_cols: usize,
}

impl<S: Scalar> Incriminator<S> {
    /// `spatial` is required only for the primed variant's per-location
    /// weights.
    pub fn new(
        spec: IncriminatorSpec,
        d: usize,
        x_features: usize,
        y_features: usize,
        spatial: &[usize],
        rng: &mut impl Rng,
    ) -> Self {
        assert!(spec.t >= 1, "t must be at least 1");
        let local = spec
            .primed
            .then(|| LocallyConnected::new(spatial, spec.s, y_features, y_features, rng));
        let x_cols = spec.r.pow(d as u32) * x_features;
        let cols = spec.input_columns(d, x_features, y_features);
        Self {
            patches_x: (spec.r > 0).then(|| ExtractPatches::new(spec.r)),
            patches_y: ExtractPatches::new(spec.t),
            local,
            fc1: PointwiseAffine::new(cols, spec.n_hidden, rng),
            act: ActivationLayer::new(Activation::Relu),
            fc2: PointwiseAffine::new(spec.n_hidden, spec.out_features, rng),
            x_cols,
            spec,
            x_features,
            y_features,
        }
    }

    /// `x` is the last input frame `[batch, spatial.., m]`, `y` the folded
    /// block output `[batch, spatial.., n]`. Output `[batch, spatial.., m]`.
    /// No final activation here; the model applies it.
    pub fn forward(&mut self, x: &Tensor<S>, y: &Tensor<S>, save: bool) -> Result<Tensor<S>> {
        let spatial_of = |t: &Tensor<S>| t.shape()[..t.rank() - 1].to_vec();
        if spatial_of(x) != spatial_of(y) {
            return Err(ModelError::SpatialMismatch {
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        let y_in = match &mut self.local {
            Some(local) => local.forward(y, save)?,
            None => y.clone(),
        };
        let py = self.patches_y.forward(&y_in, save)?;
        let feature_axis = py.rank() - 1;
        let joined = match &mut self.patches_x {
            Some(patches_x) => patches_x.forward(x, save)?.concat(&py, feature_axis)?,
            None => py,
        };
        let h = self.fc1.forward(&joined, save)?;
        let h = self.act.forward(&h, save)?;
        Ok(self.fc2.forward(&h, save)?)
    }

    /// Returns gradients for the two inputs; the frame gradient is `None`
    /// when `r = 0` (the output does not depend on the frame).
    pub fn backward(&mut self, grad_out: &Tensor<S>) -> Result<(Option<Tensor<S>>, Tensor<S>)> {
        let g = self.fc2.backward(grad_out)?;
        let g = self.act.backward(&g)?;
        let g = self.fc1.backward(&g)?;
        let feature_axis = g.rank() - 1;
        let (grad_x, gy) = match &mut self.patches_x {
            Some(patches_x) => {
                let (gx, gy) = g.split(feature_axis, self.x_cols)?;
                (Some(patches_x.backward(&gx)?), gy)
            }
            None => (None, g),
        };
        let grad_y_in = self.patches_y.backward(&gy)?;
        let grad_y = match &mut self.local {
            Some(local) => local.backward(&grad_y_in)?,
            None => grad_y_in,
        };
        Ok((grad_x, grad_y))
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, S>) {
        if let Some(local) = &mut self.local {
            local.visit_params(&crate::layers::join(prefix, "local"), f);
        }
        self.fc1.visit_params(&crate::layers::join(prefix, "fc1"), f);
        self.fc2.visit_params(&crate::layers::join(prefix, "fc2"), f);
    }

    pub fn zero_grads(&mut self) {
        if let Some(local) = &mut self.local {
            local.zero_grads();
        }
        self.fc1.zero_grads();
        self.fc2.zero_grads();
    }

    pub fn clear_saved(&mut self) {
        if let Some(local) = &mut self.local {
            local.clear_saved();
        }
        if let Some(p) = &mut self.patches_x {
            p.clear_saved();
        }
        self.patches_y.clear_saved();
        self.fc1.clear_saved();
        self.act.clear_saved();
        self.fc2.clear_saved();
    }

    pub fn param_count(&self) -> usize {
        self.local.as_ref().map_or(0, |l| l.param_count())
            + self.fc1.param_count()
            + self.fc2.param_count()
    }

    /// Test/inspection access to the two shared matrices.
    pub fn fc_layers_mut(&mut self) -> (&mut PointwiseAffine<S>, &mut PointwiseAffine<S>) {
        (&mut self.fc1, &mut self.fc2)
    }

    pub fn local_mut(&mut self) -> Option<&mut LocallyConnected<S>> {
        self.local.as_mut()
    }
}
