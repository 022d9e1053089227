use super::tfc::ClassifierHead;
use super::{
    Incriminator, IncriminatorSpec, ModelError, ResidualBlock, ResidualBlockSpec, Result, TfcModel,
};
use crate::layers::{PointwiseAffine, ResidualCellSpec};
use crate::tensor::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Full description of a model; built-ins fill one in, custom configs may
/// construct it directly.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub name: String,
    pub d: usize,
    pub window_len: usize,
    pub in_features: usize,
    pub spatial: Vec<usize>,
    pub block: ResidualBlockSpec,
    pub incriminator: IncriminatorSpec,
    /// Classifier fc widths (e.g. `[96, 10]`); `None` for forecasters.
    pub classifier: Option<Vec<usize>>,
}

impl ModelConfig {
    pub fn is_classifier(&self) -> bool {
        self.classifier.is_some()
    }

    /// Feature count the incriminator sees from the block side: the block
    /// output, times any leftover time axis merged in classifier mode.
    pub fn summary_features(&self) -> usize {
        self.block.out_features() * self.block.fold(self.window_len)
    }

    /// Analytic trainable-scalar count, summed from per-layer formulas.
    pub fn param_count(&self) -> usize {
        let mut total = self.block.param_count(self.in_features);
        total += self.incriminator.param_count(
            self.d,
            self.in_features,
            self.summary_features(),
            &self.spatial,
        );
        if let Some(widths) = &self.classifier {
            let mut m = self.spatial.iter().product::<usize>() * self.incriminator.out_features;
            for &n in widths {
                total += m * n + n;
                m = n;
            }
        }
        total
    }

    /// Checks structural invariants; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let warnings =
            self.block
                .validate(self.window_len, self.in_features, self.is_classifier())?;
        let expected_m = if self.is_classifier() {
            self.incriminator.out_features
        } else {
            self.in_features
        };
        if self.incriminator.out_features != expected_m {
            return Err(ModelError::FeatureMismatch {
                expected: expected_m,
                actual: self.incriminator.out_features,
            });
        }
        Ok(warnings)
    }
}

pub fn builtin_names() -> &'static [&'static str] {
    &[
        "tfc-d2",
        "tfc-d2p",
        "tfc-d2-l",
        "tfc-d2-lp",
        "tfc-d1",
        "tfc-d1-cifar",
    ]
}

fn d2_head_cell() -> ResidualCellSpec {
    ResidualCellSpec::new(16, 32, 1, 1, &[4, 8, 8], &[4, 5, 5])
}

fn d2_cells() -> Vec<ResidualCellSpec> {
    vec![
        d2_head_cell(),
        ResidualCellSpec::new(32, 64, 2, 2, &[2, 5, 5], &[4, 3, 3]),
        ResidualCellSpec::new(72, 96, 2, 2, &[3, 2, 2], &[2, 3, 3]),
    ]
}

fn d2_long_cells(last_n2: usize) -> Vec<ResidualCellSpec> {
    vec![
        d2_head_cell(),
        ResidualCellSpec::new(32, 64, 1, 2, &[2, 5, 5], &[4, 3, 3]),
        ResidualCellSpec::new(64, 64, 1, 2, &[2, 5, 5], &[4, 3, 3]),
        ResidualCellSpec::new(72, 72, 1, 2, &[3, 2, 2], &[2, 3, 3]),
        ResidualCellSpec::new(72, last_n2, 1, 2, &[3, 2, 2], &[2, 3, 3]),
    ]
}

fn d1_cells() -> Vec<ResidualCellSpec> {
    vec![
        ResidualCellSpec::new(16, 32, 1, 1, &[5, 16], &[6, 15]),
        ResidualCellSpec::new(32, 64, 1, 1, &[6, 8], &[3, 4]),
        ResidualCellSpec::new(64, 72, 1, 2, &[3, 5], &[4, 7]),
        ResidualCellSpec::new(72, 96, 1, 2, &[4, 8], &[4, 7]),
        ResidualCellSpec::new(96, 96, 1, 2, &[2, 8], &[3, 7]),
        ResidualCellSpec::new(96, 128, 1, 2, &[3, 2], &[2, 3]),
    ]
}

/// Named built-in configurations. `window_len` overrides the default input
/// window length (10 frames for forecasters, the 32-pixel image height for
/// the classifier).
pub fn builtin_config(name: &str, window_len: Option<usize>) -> Result<ModelConfig> {
    let cfg = match name {
        "tfc-d2" => ModelConfig {
            name: name.into(),
            d: 2,
            window_len: window_len.unwrap_or(10),
            in_features: 1,
            spatial: vec![64, 64],
            block: ResidualBlockSpec {
                cells: d2_cells(),
                fc_features: vec![96, 8],
            },
            incriminator: IncriminatorSpec::new(7, 1, 1000, 1),
            classifier: None,
        },
        "tfc-d2p" => ModelConfig {
            name: name.into(),
            d: 2,
            window_len: window_len.unwrap_or(10),
            in_features: 1,
            spatial: vec![64, 64],
            block: ResidualBlockSpec {
                cells: d2_cells(),
                fc_features: vec![96, 8],
            },
            incriminator: IncriminatorSpec::primed(7, 1, 1, 1000, 1),
            classifier: None,
        },
        "tfc-d2-l" => ModelConfig {
            name: name.into(),
            d: 2,
            window_len: window_len.unwrap_or(10),
            in_features: 1,
            spatial: vec![64, 64],
            block: ResidualBlockSpec {
                cells: d2_long_cells(128),
                fc_features: vec![128, 8],
            },
            incriminator: IncriminatorSpec::new(7, 1, 1000, 1),
            classifier: None,
        },
        "tfc-d2-lp" => ModelConfig {
            name: name.into(),
            d: 2,
            window_len: window_len.unwrap_or(10),
            in_features: 1,
            spatial: vec![64, 64],
            block: ResidualBlockSpec {
                cells: d2_long_cells(96),
                fc_features: vec![96, 8],
            },
            incriminator: IncriminatorSpec::primed(7, 1, 1, 1000, 1),
            classifier: None,
        },
        "tfc-d1" => ModelConfig {
            name: name.into(),
            d: 1,
            window_len: window_len.unwrap_or(10),
            in_features: 1,
            spatial: vec![88],
            block: ResidualBlockSpec {
                cells: d1_cells(),
                fc_features: vec![128, 16],
            },
            incriminator: IncriminatorSpec::new(12, 1, 1200, 1),
            classifier: None,
        },
        "tfc-d1-cifar" => ModelConfig {
            name: name.into(),
            d: 1,
            window_len: window_len.unwrap_or(32),
            in_features: 3,
            spatial: vec![32],
            block: ResidualBlockSpec {
                cells: d1_cells(),
                fc_features: vec![128, 16],
            },
            incriminator: IncriminatorSpec::new(0, 1, 1200, 3),
            classifier: Some(vec![96, 10]),
        },
        other => return Err(ModelError::UnknownBuiltin(other.into())),
    };
    Ok(cfg)
}

/// Instantiates a model with seeded parameters. Warnings from validation are
/// returned alongside so the caller can surface them.
pub fn build_model<S: Scalar>(
    config: &ModelConfig,
    seed: u64,
) -> Result<(TfcModel<S>, Vec<String>)> {
    let warnings = config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = ResidualBlock::new(config.block.clone(), config.in_features, &mut rng);
    let incriminator = Incriminator::new(
        config.incriminator.clone(),
        config.d,
        config.in_features,
        config.summary_features(),
        &config.spatial,
        &mut rng,
    );
    let head = match &config.classifier {
        Some(widths) => {
            assert_eq!(widths.len(), 2, "classifier head is two fc layers");
            let flat = config.spatial.iter().product::<usize>() * config.incriminator.out_features;
            let fc_a = PointwiseAffine::new(flat, widths[0], &mut rng);
            let fc_b = PointwiseAffine::new(widths[0], widths[1], &mut rng);
            Some(ClassifierHead::new(fc_a, fc_b))
        }
        None => None,
    };
    let model = TfcModel::assemble(
        config.name.clone(),
        config.d,
        config.window_len,
        config.in_features,
        config.spatial.clone(),
        block,
        incriminator,
        head,
        config.block.fold(config.window_len),
    );
    Ok((model, warnings))
}
