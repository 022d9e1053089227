//! Run configuration: a flat `key = value` file with dotted section
//! prefixes, e.g.
//!
//! ```text
//! task = forecast-mnist
//! model = tfc-d2
//! training.epochs = 3
//! data.path = data/sequences.npy
//! output.dir = runs/mnist
//! ```

use crate::model::{builtin_config, ModelConfig, ModelError};
use crate::tensor::Dtype;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: expected `key = value`")]
    BadLine(usize),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    ForecastMnist,
    ForecastJsb,
    ClassifyCifar10,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::ForecastMnist => "forecast-mnist",
            Task::ForecastJsb => "forecast-jsb",
            Task::ClassifyCifar10 => "classify-cifar10",
        }
    }

    fn default_model(self) -> &'static str {
        match self {
            Task::ForecastMnist => "tfc-d2",
            Task::ForecastJsb => "tfc-d1",
            Task::ClassifyCifar10 => "tfc-d1-cifar",
        }
    }

    /// Published protocol defaults: (learning rate, batch size, epochs).
    fn defaults(self) -> (f64, usize, usize) {
        match self {
            Task::ForecastMnist => (0.0005, 18, 50),
            Task::ForecastJsb => (0.002, 50, 50),
            Task::ClassifyCifar10 => (0.0005, 50, 450),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: Task,
    /// Built-in model name.
    pub model: String,
    /// Multiplies every internal feature width (desk-scale reductions).
    pub feature_scale: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub precision: Dtype,
    /// NPY archive (mnist), chorale JSON (jsb), or batch directory (cifar).
    pub data_path: PathBuf,
    /// Forecast horizon K.
    pub horizon: usize,
    pub split_seed: u64,
    /// Chorales assigned to the training corpus, in published order.
    pub train_chorales: usize,
    /// Optional desk-scale caps on the split sizes.
    pub train_limit: Option<usize>,
    pub val_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub out_dir: PathBuf,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        message: format!("cannot parse `{value}`"),
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }

    pub fn parse_text(text: &str) -> Result<RunConfig> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::BadLine(lineno + 1))?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }

        let task_text = pairs
            .iter()
            .find(|(k, _)| k == "task")
            .map(|(_, v)| v.clone())
            .ok_or(ConfigError::Missing("task"))?;
        let task = match task_text.as_str() {
            "forecast-mnist" => Task::ForecastMnist,
            "forecast-jsb" => Task::ForecastJsb,
            "classify-cifar10" => Task::ClassifyCifar10,
            other => {
                return Err(ConfigError::BadValue {
                    key: "task".into(),
                    message: format!("unknown task `{other}`"),
                })
            }
        };
        let (lr, batch_size, epochs) = task.defaults();
        let mut cfg = RunConfig {
            task,
            model: task.default_model().to_string(),
            feature_scale: 1.0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs,
            batch_size,
            seed: 0,
            precision: Dtype::F32,
            data_path: PathBuf::new(),
            horizon: 1,
            split_seed: 0,
            train_chorales: 250,
            train_limit: None,
            val_limit: None,
            test_limit: None,
            out_dir: PathBuf::new(),
        };
        let mut have_data = false;
        let mut have_out = false;
        for (key, value) in &pairs {
            match key.as_str() {
                "task" => {}
                "model" => cfg.model = value.clone(),
                "model.feature_scale" => cfg.feature_scale = parse(key, value)?,
                "optimizer.lr" => cfg.lr = parse(key, value)?,
                "optimizer.beta1" => cfg.beta1 = parse(key, value)?,
                "optimizer.beta2" => cfg.beta2 = parse(key, value)?,
                "optimizer.eps" => cfg.eps = parse(key, value)?,
                "training.epochs" => cfg.epochs = parse(key, value)?,
                "training.batch_size" => cfg.batch_size = parse(key, value)?,
                "training.seed" => cfg.seed = parse(key, value)?,
                "training.precision" => {
                    cfg.precision = match value.as_str() {
                        "f32" => Dtype::F32,
                        "f64" => Dtype::F64,
                        other => {
                            return Err(ConfigError::BadValue {
                                key: key.clone(),
                                message: format!("precision must be f32 or f64, got `{other}`"),
                            })
                        }
                    }
                }
                "data.path" => {
                    cfg.data_path = PathBuf::from(value);
                    have_data = true;
                }
                "data.horizon" => cfg.horizon = parse(key, value)?,
                "data.split_seed" => cfg.split_seed = parse(key, value)?,
                "data.train_chorales" => cfg.train_chorales = parse(key, value)?,
                "data.train_limit" => cfg.train_limit = Some(parse(key, value)?),
                "data.val_limit" => cfg.val_limit = Some(parse(key, value)?),
                "data.test_limit" => cfg.test_limit = Some(parse(key, value)?),
                "output.dir" => {
                    cfg.out_dir = PathBuf::from(value);
                    have_out = true;
                }
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        if !have_data {
            return Err(ConfigError::Missing("data.path"));
        }
        if !have_out {
            return Err(ConfigError::Missing("output.dir"));
        }
        if cfg.batch_size == 0 {
            return Err(ConfigError::BadValue {
                key: "training.batch_size".into(),
                message: "must be positive".into(),
            });
        }
        if !(cfg.feature_scale > 0.0 && cfg.feature_scale <= 1.0) {
            return Err(ConfigError::BadValue {
                key: "model.feature_scale".into(),
                message: "must be in (0, 1]".into(),
            });
        }
        Ok(cfg)
    }

    /// Resolves the architecture, applying any feature-width reduction.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut model = builtin_config(&self.model, None)?;
        if self.feature_scale < 1.0 {
            scale_features(&mut model, self.feature_scale);
        }
        Ok(model)
    }
}

/// Shrinks internal widths by `scale` (output widths stay fixed): conv
/// features, block fc widths, the incriminator's hidden width, and all but
/// the last classifier width.
pub fn scale_features(model: &mut ModelConfig, scale: f64) {
    let squeeze = |v: usize| ((v as f64 * scale).round() as usize).max(2);
    for cell in &mut model.block.cells {
        // Keep n1 even so the shortcut's n1/2 features stay exact.
        cell.n1 = squeeze(cell.n1) / 2 * 2;
        cell.n2 = squeeze(cell.n2);
    }
    for w in &mut model.block.fc_features {
        *w = squeeze(*w);
    }
    model.incriminator.n_hidden = squeeze(model.incriminator.n_hidden);
    if let Some(widths) = &mut model.classifier {
        let last = widths.len() - 1;
        for w in &mut widths[..last] {
            *w = squeeze(*w);
        }
    }
}
