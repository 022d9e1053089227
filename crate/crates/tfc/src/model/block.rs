use super::{ModelError, Result};
use crate::layers::{
    Activation, ActivationLayer, ConvSpec, Layer, ParamVisitor, PointwiseAffine, ResidualCell,
    ResidualCellSpec,
};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

/// Residual block hyperparameters: an ordered cell chain followed by
/// pointwise fully connected layers.
///
/// The cell strides fold the time axis; for forecasting models the chain must
/// reach length 1 on the configured window, at which point the time axis is
/// squeezed away before the fc layers. Classifier-mode models may leave a
/// longer time axis (the head's flatten absorbs it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualBlockSpec {
    pub cells: Vec<ResidualCellSpec>,
    /// Widths of the trailing pointwise fc layers; the last entry is the
    /// block's output feature count n.
    pub fc_features: Vec<usize>,
}

impl ResidualBlockSpec {
    pub fn out_features(&self) -> usize {
        *self.fc_features.last().expect("at least one fc layer")
    }

    /// Time length left after the cell chain.
    pub fn fold(&self, time: usize) -> usize {
        self.cells.iter().fold(time, |t, c| c.fold(t))
    }

    /// Feature count entering the fc layers.
    pub fn cell_out_features(&self, in_features: usize) -> usize {
        self.cells
            .iter()
            .fold(in_features, |m, c| c.out_features(m))
    }

    /// Checks the fold-to-one invariant (unless `allow_partial_fold`) and
    /// returns soft warnings, currently only for non-increasing feature
    /// ordering across cells.
    pub fn validate(
        &self,
        window_len: usize,
        in_features: usize,
        allow_partial_fold: bool,
    ) -> Result<Vec<String>> {
        assert!(!self.cells.is_empty() && !self.fc_features.is_empty());
        let folded = self.fold(window_len);
        if folded != 1 && !allow_partial_fold {
            return Err(ModelError::FoldShortfall {
                window: window_len,
                folded,
            });
        }
        let mut warnings = Vec::new();
        let mut prev = in_features;
        for (i, cell) in self.cells.iter().enumerate() {
            if cell.n2 <= prev {
                warnings.push(format!(
                    "cell {i}: feature count {} does not exceed the preceding {prev}",
                    cell.n2
                ));
            }
            prev = cell.n2;
        }
        Ok(warnings)
    }

    /// Analytic trainable-scalar count, summed from the layer formulas.
    pub fn param_count(&self, in_features: usize) -> usize {
        let mut total = 0;
        let mut m = in_features;
        for cell in &self.cells {
            let ones = vec![1; cell.k1.len()];
            total += ConvSpec::new(m, cell.n1, &cell.k1, cell.s1).param_count();
            total += ConvSpec::new(cell.n1, cell.n2, &cell.k2, cell.s2).param_count();
            if cell.has_shortcut_conv() {
                total +=
                    ConvSpec::new(m, cell.shortcut_features(), &ones, cell.s1 * cell.s2)
                        .param_count();
            }
            m = cell.out_features(m);
        }
        for &n in &self.fc_features {
            total += m * n + n;
            m = n;
        }
        total
    }
}

/// Instantiated residual block: cells, then pointwise fc layers with a relu
/// between consecutive fc layers (none after the last, whose output feeds
/// the incriminator).
pub struct ResidualBlock<S: Scalar> {
    pub spec: ResidualBlockSpec,
    pub in_features: usize,
    cells: Vec<ResidualCell<S>>,
    fcs: Vec<PointwiseAffine<S>>,
    fc_acts: Vec<ActivationLayer<S>>,
    /// Pre-squeeze shapes, pushed when a forward removed the length-1 time
    /// axis, so backward can restore it.
    saved_squeeze: Vec<Option<Vec<usize>>>,
}

impl<S: Scalar> ResidualBlock<S> {
    pub fn new(spec: ResidualBlockSpec, in_features: usize, rng: &mut impl Rng) -> Self {
        let mut cells = Vec::new();
        let mut m = in_features;
        for cell_spec in &spec.cells {
            let cell = ResidualCell::new(cell_spec.clone(), m, rng);
            m = cell_spec.out_features(m);
            cells.push(cell);
        }
        let mut fcs = Vec::new();
        let mut fc_acts = Vec::new();
        for (i, &n) in spec.fc_features.iter().enumerate() {
            fcs.push(PointwiseAffine::new(m, n, rng));
            if i + 1 < spec.fc_features.len() {
                fc_acts.push(ActivationLayer::new(Activation::Relu));
            }
            m = n;
        }
        Self {
            spec,
            in_features,
            cells,
            fcs,
            fc_acts,
            saved_squeeze: Vec::new(),
        }
    }
}

impl<S: Scalar> Layer<S> for ResidualBlock<S> {
    fn forward(&mut self, x: &Tensor<S>, save: bool) -> crate::tensor::Result<Tensor<S>> {
        let mut h = x.clone();
        for cell in &mut self.cells {
            h = cell.forward(&h, save)?;
        }
        // Squeeze a fully folded time axis; a longer leftover axis is kept
        // (classifier mode) and the fc layers act pointwise across it.
        let squeeze = h.shape()[1] == 1;
        let pre_squeeze = squeeze.then(|| h.shape().to_vec());
        if squeeze {
            let new_shape: Vec<usize> = std::iter::once(h.shape()[0])
                .chain(h.shape()[2..].iter().copied())
                .collect();
            h = h.into_reshape(&new_shape)?;
        }
        if save {
            self.saved_squeeze.push(pre_squeeze);
        }
        for i in 0..self.fcs.len() {
            h = self.fcs[i].forward(&h, save)?;
            if i < self.fc_acts.len() {
                h = self.fc_acts[i].forward(&h, save)?;
            }
        }
        Ok(h)
    }

    fn backward(&mut self, grad_out: &Tensor<S>) -> crate::tensor::Result<Tensor<S>> {
        let mut g = grad_out.clone();
        for i in (0..self.fcs.len()).rev() {
            if i < self.fc_acts.len() {
                g = self.fc_acts[i].backward(&g)?;
            }
            g = self.fcs[i].backward(&g)?;
        }
        if let Some(shape) = self.saved_squeeze.pop().expect("backward without forward") {
            g = g.into_reshape(&shape)?;
        }
        for cell in self.cells.iter_mut().rev() {
            g = cell.backward(&g)?;
        }
        Ok(g)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, S>) {
        for (i, cell) in self.cells.iter_mut().enumerate() {
            cell.visit_params(&crate::layers::join(prefix, &format!("cell{i}")), f);
        }
        for (i, fc) in self.fcs.iter_mut().enumerate() {
            fc.visit_params(&crate::layers::join(prefix, &format!("fc{i}")), f);
        }
    }

    fn zero_grads(&mut self) {
        self.cells.iter_mut().for_each(Layer::zero_grads);
        self.fcs.iter_mut().for_each(Layer::zero_grads);
    }

    fn clear_saved(&mut self) {
        self.cells.iter_mut().for_each(Layer::clear_saved);
        self.fcs.iter_mut().for_each(Layer::clear_saved);
        self.fc_acts.iter_mut().for_each(Layer::clear_saved);
        self.saved_squeeze.clear();
    }

    fn param_count(&self) -> usize {
        self.cells.iter().map(Layer::param_count).sum::<usize>()
            + self.fcs.iter().map(Layer::param_count).sum::<usize>()
    }
}
