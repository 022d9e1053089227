//! Gradient-check subjects for the `gradcheck` command: whole reduced
//! models under their training losses, plus single-layer systems for each
//! layer kind.

use crate::layers::{
    glorot_uniform, Activation, ActivationLayer, Conv, ConvSpec, GradSystem, Layer, LayerSystem,
    LocallyConnected, PointwiseAffine, ResidualCell, ResidualCellSpec,
};
use crate::model::{build_model, Incriminator, IncriminatorSpec, ModelConfig, TfcModel};
use crate::tensor::Tensor;
use crate::train::{cross_entropy_from_logits, mse_loss};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn seeded_input(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    glorot_uniform(shape, 1, 1, &mut rng)
}

/// A forecaster under the chained k-step training loss `Σ_j w_j ⊙ y_j`.
pub struct ChainSystem {
    pub model: TfcModel<f64>,
    pub window: Tensor<f64>,
    window_grad: Tensor<f64>,
    weights: Vec<Tensor<f64>>,
    k: usize,
}

impl ChainSystem {
    pub fn new(config: &ModelConfig, k: usize, model_seed: u64, data_seed: u64) -> Self {
        let (mut model, _) = build_model::<f64>(config, model_seed).expect("buildable config");
        let window = seeded_input(&model.window_shape(1), data_seed);
        let preds = model.forecast_serial(&window, k).expect("forecast");
        let weights = preds
            .iter()
            .enumerate()
            .map(|(j, p)| seeded_input(p.shape(), data_seed ^ (j as u64 + 0x77)))
            .collect();
        let window_grad = Tensor::zeros(window.shape());
        Self {
            model,
            window,
            window_grad,
            weights,
            k,
        }
    }
}

impl GradSystem for ChainSystem {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>, &mut Tensor<f64>)) {
        self.model.visit_params(f);
        f("input", &mut self.window, &mut self.window_grad);
    }

    fn loss(&mut self) -> f64 {
        let preds = self.model.forecast_serial(&self.window, self.k).unwrap();
        preds
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p.zip(w, |a, b| a * b).unwrap().sum())
            .sum()
    }

    fn loss_and_backward(&mut self) -> f64 {
        self.model.zero_grads();
        self.model.clear_saved();
        let preds = self.model.forecast_chain(&self.window, self.k, true).unwrap();
        let loss = preds
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p.zip(w, |a, b| a * b).unwrap().sum())
            .sum();
        self.window_grad = self.model.backward_chain(&self.weights).unwrap();
        loss
    }
}

/// A classifier under softmax cross-entropy against fixed labels.
pub struct ClassifySystem {
    pub model: TfcModel<f64>,
    pub image: Tensor<f64>,
    image_grad: Tensor<f64>,
    labels: Vec<usize>,
}

impl ClassifySystem {
    pub fn new(config: &ModelConfig, model_seed: u64, data_seed: u64) -> Self {
        let (model, _) = build_model::<f64>(config, model_seed).expect("buildable config");
        let image = seeded_input(&model.window_shape(2), data_seed);
        let classes = config.classifier.as_ref().unwrap()[1];
        let image_grad = Tensor::zeros(image.shape());
        Self {
            model,
            image,
            image_grad,
            labels: vec![0, classes - 1],
        }
    }
}

impl GradSystem for ClassifySystem {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>, &mut Tensor<f64>)) {
        self.model.visit_params(f);
        f("input", &mut self.image, &mut self.image_grad);
    }

    fn loss(&mut self) -> f64 {
        let logits = self.model.classify_logits(&self.image, false).unwrap();
        cross_entropy_from_logits(&logits, &self.labels).unwrap().0
    }

    fn loss_and_backward(&mut self) -> f64 {
        self.model.zero_grads();
        self.model.clear_saved();
        let logits = self.model.classify_logits(&self.image, true).unwrap();
        let (loss, grad, _) = cross_entropy_from_logits(&logits, &self.labels).unwrap();
        self.image_grad = self.model.backward_classify(&grad).unwrap();
        loss
    }
}

/// A standalone incriminator (its two inputs both participate as entries).
pub struct IncriminatorSystem {
    cell: Incriminator<f64>,
    x: Tensor<f64>,
    y: Tensor<f64>,
    x_grad: Tensor<f64>,
    y_grad: Tensor<f64>,
    weights: Tensor<f64>,
}

impl IncriminatorSystem {
    pub fn new(spec: IncriminatorSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n, spatial) = (spec.out_features, 5, vec![4, 3]);
        let mut cell = Incriminator::new(spec, 2, m, n, &spatial, &mut rng);
        let x = seeded_input(&[2, 4, 3, m], seed ^ 1);
        let y = seeded_input(&[2, 4, 3, n], seed ^ 2);
        let out = cell.forward(&x, &y, false).unwrap();
        let weights = seeded_input(out.shape(), seed ^ 3);
        let (x_grad, y_grad) = (Tensor::zeros(x.shape()), Tensor::zeros(y.shape()));
        Self {
            cell,
            x,
            y,
            x_grad,
            y_grad,
            weights,
        }
    }
}

impl GradSystem for IncriminatorSystem {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>, &mut Tensor<f64>)) {
        self.cell.visit_params("incr", f);
        f("input_x", &mut self.x, &mut self.x_grad);
        f("input_y", &mut self.y, &mut self.y_grad);
    }

    fn loss(&mut self) -> f64 {
        let out = self.cell.forward(&self.x, &self.y, false).unwrap();
        out.zip(&self.weights, |a, b| a * b).unwrap().sum()
    }

    fn loss_and_backward(&mut self) -> f64 {
        self.cell.zero_grads();
        self.cell.clear_saved();
        let out = self.cell.forward(&self.x, &self.y, true).unwrap();
        let loss = out.zip(&self.weights, |a, b| a * b).unwrap().sum();
        let (gx, gy) = self.cell.backward(&self.weights).unwrap();
        self.x_grad = gx.expect("r > 0 in the checked spec");
        self.y_grad = gy;
        loss
    }
}

/// Softmax + cross-entropy over bare logits (checks the fused gradient).
pub struct CeSystem {
    logits: Tensor<f64>,
    grad: Tensor<f64>,
    labels: Vec<usize>,
}

impl CeSystem {
    pub fn new(seed: u64) -> Self {
        let logits = seeded_input(&[3, 7], seed);
        let grad = Tensor::zeros(&[3, 7]);
        Self {
            logits,
            grad,
            labels: vec![0, 3, 6],
        }
    }
}

impl GradSystem for CeSystem {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>, &mut Tensor<f64>)) {
        f("logits", &mut self.logits, &mut self.grad);
    }

    fn loss(&mut self) -> f64 {
        cross_entropy_from_logits(&self.logits, &self.labels).unwrap().0
    }

    fn loss_and_backward(&mut self) -> f64 {
        let (loss, grad, _) = cross_entropy_from_logits(&self.logits, &self.labels).unwrap();
        self.grad = grad;
        loss
    }
}

/// tanh activation followed by mse (the forecasting output path).
pub struct TanhMseSystem {
    act: ActivationLayer<f64>,
    input: Tensor<f64>,
    grad: Tensor<f64>,
    target: Tensor<f64>,
}

impl TanhMseSystem {
    pub fn new(seed: u64) -> Self {
        let input = seeded_input(&[2, 4, 3], seed);
        let target = seeded_input(&[2, 4, 3], seed ^ 9);
        let grad = Tensor::zeros(&[2, 4, 3]);
        Self {
            act: ActivationLayer::new(Activation::Tanh),
            input,
            grad,
            target,
        }
    }
}

impl GradSystem for TanhMseSystem {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>, &mut Tensor<f64>)) {
        f("input", &mut self.input, &mut self.grad);
    }

    fn loss(&mut self) -> f64 {
        let out = self.act.forward(&self.input, false).unwrap();
        mse_loss(&out, &self.target).unwrap().0
    }

    fn loss_and_backward(&mut self) -> f64 {
        self.act.clear_saved();
        let out = self.act.forward(&self.input, true).unwrap();
        let (loss, grad) = mse_loss(&out, &self.target).unwrap();
        self.grad = self.act.backward(&grad).unwrap();
        loss
    }
}

pub const LAYER_KINDS: &[&str] = &[
    "conv2d",
    "conv3d",
    "affine",
    "local",
    "cell",
    "incriminator",
    "incriminator-primed",
    "softmax-ce",
    "tanh-mse",
];

/// Builds the named single-layer system; names are listed in [`LAYER_KINDS`].
pub fn layer_system(kind: &str, seed: u64) -> Option<Box<dyn GradSystem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Some(match kind {
        "conv2d" => Box::new(LayerSystem::new(
            Conv::new(ConvSpec::new(2, 3, &[3, 3], 2), &mut rng),
            &[2, 5, 4, 2],
            seed,
        )),
        "conv3d" => Box::new(LayerSystem::new(
            Conv::new(ConvSpec::new(2, 3, &[3, 3, 3], 2), &mut rng),
            &[1, 5, 4, 4, 2],
            seed,
        )),
        "affine" => Box::new(LayerSystem::new(
            PointwiseAffine::new(4, 3, &mut rng),
            &[2, 5, 4],
            seed,
        )),
        "local" => Box::new(LayerSystem::new(
            LocallyConnected::new(&[4, 3], 2, 2, 2, &mut rng),
            &[2, 4, 3, 2],
            seed,
        )),
        "cell" => Box::new(LayerSystem::new(
            ResidualCell::new(ResidualCellSpec::new(4, 5, 2, 1, &[2, 3], &[2, 3]), 2, &mut rng),
            &[1, 6, 5, 2],
            seed,
        )),
        "incriminator" => Box::new(IncriminatorSystem::new(
            IncriminatorSpec::new(2, 1, 6, 3),
            seed,
        )),
        "incriminator-primed" => Box::new(IncriminatorSystem::new(
            IncriminatorSpec::primed(2, 1, 2, 6, 3),
            seed,
        )),
        "softmax-ce" => Box::new(CeSystem::new(seed)),
        "tanh-mse" => Box::new(TanhMseSystem::new(seed)),
        _ => return None,
    })
}
