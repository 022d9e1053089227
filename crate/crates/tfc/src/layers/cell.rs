use super::{join, Activation, ActivationLayer, Conv, ConvSpec, Layer, ParamVisitor};
use crate::tensor::{Result, Scalar, Tensor, TensorError};
use rand::Rng;

/// Residual cell hyperparameters: two strided (D+1)-dimensional convolutions
/// concatenated with a shortcut branch.
///
/// The shortcut exists iff `s1 > 1` or `s2 > 1`; it is a 1-kernel convolution
/// with `n1 / 2` features and time stride `s1 * s2`, which with "same"
/// padding matches the main branch's folded time length exactly
/// (`ceil(ceil(T/s1)/s2) = ceil(T/(s1*s2))`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualCellSpec {
    pub n1: usize,
    pub n2: usize,
    pub s1: usize,
    pub s2: usize,
    /// Kernel of the first convolution, time size first (length D+1).
    pub k1: Vec<usize>,
    /// Kernel of the second convolution, time size first (length D+1).
    pub k2: Vec<usize>,
}

impl ResidualCellSpec {
    pub fn new(n1: usize, n2: usize, s1: usize, s2: usize, k1: &[usize], k2: &[usize]) -> Self {
        assert_eq!(k1.len(), k2.len(), "kernel ranks must agree");
        Self {
            n1,
            n2,
            s1,
            s2,
            k1: k1.to_vec(),
            k2: k2.to_vec(),
        }
    }

    pub fn has_shortcut_conv(&self) -> bool {
        self.s1 > 1 || self.s2 > 1
    }

    pub fn shortcut_features(&self) -> usize {
        self.n1 / 2
    }

    /// Output feature count given the input feature count.
    pub fn out_features(&self, in_features: usize) -> usize {
        self.n2
            + if self.has_shortcut_conv() {
                self.shortcut_features()
            } else {
                in_features
            }
    }

    pub fn fold(&self, time: usize) -> usize {
        time.div_ceil(self.s1).div_ceil(self.s2)
    }
}

/// `CC(Layer1, Layer2)` with `Layer1 = conv2 ∘ relu ∘ conv1` and `Layer2`
/// the shortcut; a relu follows the concatenation.
pub struct ResidualCell<S: Scalar> {
    pub spec: ResidualCellSpec,
    pub in_features: usize,
    conv1: Conv<S>,
    act1: ActivationLayer<S>,
    conv2: Conv<S>,
    shortcut: Option<Conv<S>>,
    post: ActivationLayer<S>,
}

impl<S: Scalar> ResidualCell<S> {
    pub fn new(spec: ResidualCellSpec, in_features: usize, rng: &mut impl Rng) -> Self {
        let conv1 = Conv::new(
            ConvSpec::new(in_features, spec.n1, &spec.k1, spec.s1),
            rng,
        );
        let conv2 = Conv::new(ConvSpec::new(spec.n1, spec.n2, &spec.k2, spec.s2), rng);
        let shortcut = spec.has_shortcut_conv().then(|| {
            let ones = vec![1usize; spec.k1.len()];
            Conv::new(
                ConvSpec::new(
                    in_features,
                    spec.shortcut_features(),
                    &ones,
                    spec.s1 * spec.s2,
                ),
                rng,
            )
        });
        Self {
            spec,
            in_features,
            conv1,
            act1: ActivationLayer::new(Activation::Relu),
            conv2,
            shortcut,
            post: ActivationLayer::new(Activation::Relu),
        }
    }
}

impl<S: Scalar> Layer<S> for ResidualCell<S> {
    fn forward(&mut self, x: &Tensor<S>, save: bool) -> Result<Tensor<S>> {
        let a = self.conv1.forward(x, save)?;
        let h = self.act1.forward(&a, save)?;
        let z = self.conv2.forward(&h, save)?;
        let sc = match &mut self.shortcut {
            Some(conv) => conv.forward(x, save)?,
            None => x.clone(),
        };
        if z.shape()[1] != sc.shape()[1] {
            // Must be impossible by construction (product-stride shortcut).
            return Err(TensorError::ShapeMismatch {
                left: z.shape().to_vec(),
                right: sc.shape().to_vec(),
                context: "residual cell branch time length",
            });
        }
        let cat = z.concat(&sc, z.rank() - 1)?;
        self.post.forward(&cat, save)
    }

    fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let g = self.post.backward(grad_out)?;
        let (gz, gsc) = g.split(g.rank() - 1, self.spec.n2)?;
        let gh = self.conv2.backward(&gz)?;
        let ga = self.act1.backward(&gh)?;
        let mut gx = self.conv1.backward(&ga)?;
        match &mut self.shortcut {
            Some(conv) => gx.add_assign(&conv.backward(&gsc)?)?,
            None => gx.add_assign(&gsc)?,
        }
        Ok(gx)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, S>) {
        self.conv1.visit_params(&join(prefix, "conv1"), f);
        self.conv2.visit_params(&join(prefix, "conv2"), f);
        if let Some(conv) = &mut self.shortcut {
            conv.visit_params(&join(prefix, "shortcut"), f);
        }
    }

    fn zero_grads(&mut self) {
        self.conv1.zero_grads();
        self.conv2.zero_grads();
        if let Some(conv) = &mut self.shortcut {
            conv.zero_grads();
        }
    }

    fn clear_saved(&mut self) {
        self.conv1.clear_saved();
        self.act1.clear_saved();
        self.conv2.clear_saved();
        if let Some(conv) = &mut self.shortcut {
            conv.clear_saved();
        }
        self.post.clear_saved();
    }

    fn param_count(&self) -> usize {
        self.conv1.param_count()
            + self.conv2.param_count()
            + self.shortcut.as_ref().map_or(0, |c| c.param_count())
    }
}
