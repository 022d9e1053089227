//! Implementations of the subcommands. Each returns an exit code and prints
//! human-readable results to stdout, errors to stderr.

use super::gradsystems::{layer_system, ChainSystem, ClassifySystem, LAYER_KINDS};
use super::{EXIT_CHECK_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_DIGEST, EXIT_DIVERGED, EXIT_OK};
use crate::config::{scale_features, RunConfig, Task};
use crate::data::{
    load_cifar10_dir, load_jsb_json, load_npy, window_jsb, window_moving_mnist, DataError,
};
use crate::io::{load_checkpoint, metrics_row, save_checkpoint, CheckpointError, METRICS_HEADER};
use crate::layers::gradcheck;
use crate::model::{builtin_config, builtin_names, build_model, ModelConfig, ModelError};
use crate::tensor::{Dtype, Scalar};
use crate::train::{
    evaluate_classifier, evaluate_forecaster, evaluate_jsb, persistence_forecast_mse,
    persistence_jsb, train, Adam, BatchSource, Target, TrainError, TrainMode, TrainSettings,
};
use std::io::Write;
use std::ops::ControlFlow;
use std::path::Path;
use std::sync::Arc;

/// Published total weight counts for comparison: (name, count, band).
pub const PUBLISHED_COUNTS: &[(&str, usize, f64)] = &[
    ("tfc-d2", 447_000, 0.05),
    ("tfc-d2p", 742_000, 0.05),
    ("tfc-d2-l", 1_028_000, 0.15),
    ("tfc-d2-lp", 1_272_000, 0.15),
    ("tfc-d1", 1_270_000, 0.15),
];

struct Failure {
    code: i32,
    message: String,
}

type CmdResult = Result<(), Failure>;

fn fail(code: i32, message: impl std::fmt::Display) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        fail(EXIT_CONFIG, e)
    }
}

impl From<crate::config::ConfigError> for Failure {
    fn from(e: crate::config::ConfigError) -> Self {
        fail(EXIT_CONFIG, e)
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        fail(EXIT_DATA, e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        fail(EXIT_DATA, e)
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let code = match e {
            TrainError::Diverged { .. } => EXIT_DIVERGED,
            _ => EXIT_DATA,
        };
        fail(code, e)
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        let code = match e {
            CheckpointError::DigestMismatch { .. } => EXIT_DIGEST,
            _ => EXIT_DATA,
        };
        fail(code, e)
    }
}

fn finish(result: CmdResult) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// The task's batch sources; forecasting tasks carry an optional extra
/// full-evaluation corpus (val ∪ test).
struct TaskData<S: Scalar> {
    train: Box<dyn BatchSource<S>>,
    val: Box<dyn BatchSource<S>>,
    test: Box<dyn BatchSource<S>>,
    full_test: Option<Box<dyn BatchSource<S>>>,
}

fn load_data<S: Scalar>(cfg: &RunConfig) -> Result<TaskData<S>, Failure> {
    match cfg.task {
        Task::ForecastMnist => {
            let raw = load_npy(&cfg.data_path)?;
            let (mut train, mut val, mut test) =
                window_moving_mnist(raw, cfg.horizon, cfg.split_seed)?;
            if let Some(n) = cfg.train_limit {
                train.truncate(n);
            }
            if let Some(n) = cfg.val_limit {
                val.truncate(n);
            }
            if let Some(n) = cfg.test_limit {
                test.truncate(n);
            }
            Ok(TaskData {
                train: Box::new(train),
                val: Box::new(val),
                test: Box::new(test),
                full_test: None,
            })
        }
        Task::ForecastJsb => {
            let chorales = load_jsb_json(&cfg.data_path)?;
            let mut splits = window_jsb(chorales, cfg.train_chorales, cfg.split_seed);
            let (train_n, eval_n) = (
                splits.train.provenance().len(),
                splits.full_test.provenance().len(),
            );
            println!("chorale windows: {train_n} train, {eval_n} eval");
            if (train_n, eval_n) != (13_090, 5_809) {
                println!("note: counts differ from the published 13090 / 5809 split");
            }
            if let Some(n) = cfg.train_limit {
                splits.train.truncate(n);
            }
            if let Some(n) = cfg.val_limit {
                splits.val.truncate(n);
            }
            if let Some(n) = cfg.test_limit {
                splits.test.truncate(n);
            }
            Ok(TaskData {
                train: Box::new(splits.train),
                val: Box::new(splits.val),
                test: Box::new(splits.test),
                full_test: Some(Box::new(splits.full_test)),
            })
        }
        Task::ClassifyCifar10 => {
            let (train, test) = load_cifar10_dir(&cfg.data_path)?;
            let (train, test) = (Arc::new(train), Arc::new(test));
            let train_src = train.source(cfg.train_limit.unwrap_or(usize::MAX));
            let test_src = test.source(cfg.test_limit.unwrap_or(usize::MAX));
            // No separate validation batch files exist; epoch-level validation
            // watches (a slice of) the test set.
            let val_src = test.source(cfg.val_limit.unwrap_or(usize::MAX));
            Ok(TaskData {
                train: Box::new(train_src),
                val: Box::new(val_src),
                test: Box::new(test_src),
                full_test: None,
            })
        }
    }
}

fn train_mode(cfg: &RunConfig) -> TrainMode {
    match cfg.task {
        Task::ForecastMnist => TrainMode::Forecast {
            steps: cfg.horizon,
            piano_roll_metric: false,
        },
        Task::ForecastJsb => TrainMode::Forecast {
            steps: 1,
            piano_roll_metric: true,
        },
        Task::ClassifyCifar10 => TrainMode::Classify,
    }
}

fn adam_for<S: Scalar>(cfg: &RunConfig) -> Adam<S> {
    let mut adam = Adam::new(cfg.lr);
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.eps = cfg.eps;
    adam
}

pub fn cmd_train(config: &Path, seed_override: Option<u64>) -> i32 {
    finish((|| -> CmdResult {
        let mut cfg = RunConfig::load(config)?;
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        match cfg.precision {
            Dtype::F32 => run_train::<f32>(&cfg),
            Dtype::F64 => run_train::<f64>(&cfg),
        }
    })())
}

fn run_train<S: Scalar>(cfg: &RunConfig) -> CmdResult {
    let model_cfg = cfg.model_config()?;
    let (mut model, warnings) = build_model::<S>(&model_cfg, cfg.seed)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "model {} ({} parameters), task {}, seed {}",
        model_cfg.name,
        model.param_count(),
        cfg.task.name(),
        cfg.seed
    );
    let data = load_data::<S>(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut csv = std::fs::File::create(cfg.out_dir.join("metrics.csv"))?;
    writeln!(csv, "{METRICS_HEADER}")?;

    let settings = TrainSettings {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        seed: cfg.seed,
    };
    let mut adam = adam_for::<S>(cfg);
    let best_path = cfg.out_dir.join("best.tfck");
    let mut callback_error: Option<Failure> = None;
    let report = train(
        &mut model,
        &settings,
        train_mode(cfg),
        data.train.as_ref(),
        data.val.as_ref(),
        &mut adam,
        &mut |model, row, is_best| {
            if callback_error.is_some() {
                return ControlFlow::Break(());
            }
            let result = writeln!(csv, "{}", metrics_row(row))
                .map_err(Failure::from)
                .and_then(|()| {
                    if is_best {
                        save_checkpoint(&best_path, &model_cfg, model, None)?;
                    }
                    Ok(())
                });
            if let Err(e) = result {
                callback_error = Some(e);
            }
            println!(
                "epoch {:>3}: train {:.6} val {:.6} metric {:.6} ({:.1}s){}",
                row.epoch,
                row.train_loss,
                row.val_loss,
                row.metric,
                row.seconds,
                if is_best { " *" } else { "" }
            );
            if callback_error.is_some() {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    )?;
    if let Some(e) = callback_error {
        return Err(e);
    }
    csv.flush()?;
    save_checkpoint(&cfg.out_dir.join("final.tfck"), &model_cfg, &mut model, Some(&adam))?;
    match report.best_epoch {
        Some(epoch) => println!("best validation {:.6} at epoch {epoch}", report.best_val),
        None => println!("no epochs ran; initial parameters checkpointed"),
    }
    Ok(())
}

pub fn cmd_eval(config: &Path, checkpoint: &Path, full_test: bool, persistence: bool) -> i32 {
    finish((|| -> CmdResult {
        let cfg = RunConfig::load(config)?;
        match cfg.precision {
            Dtype::F32 => run_eval::<f32>(&cfg, checkpoint, full_test, persistence),
            Dtype::F64 => run_eval::<f64>(&cfg, checkpoint, full_test, persistence),
        }
    })())
}

fn run_eval<S: Scalar>(
    cfg: &RunConfig,
    checkpoint: &Path,
    full_test: bool,
    persistence: bool,
) -> CmdResult {
    let model_cfg = cfg.model_config()?;
    let (mut model, _) = build_model::<S>(&model_cfg, 0)?;
    load_checkpoint(checkpoint, &model_cfg, &mut model, None)?;
    let data = load_data::<S>(cfg)?;
    let ordinal = |j: usize| match j {
        0 => "one-step".to_string(),
        1 => "two-step".to_string(),
        2 => "three-step".to_string(),
        _ => format!("{}-step", j + 1),
    };
    match cfg.task {
        Task::ForecastMnist => {
            let per_step =
                evaluate_forecaster(&mut model, data.test.as_ref(), cfg.batch_size, cfg.horizon)?;
            for (j, mse) in per_step.iter().enumerate() {
                println!("{} mse: {mse:.6}", ordinal(j));
            }
            if cfg.horizon > 1 {
                let mean = per_step.iter().sum::<f64>() / per_step.len() as f64;
                println!("{}-step mean mse: {mean:.6}", cfg.horizon);
            }
            if persistence {
                let base = persistence_forecast_mse(data.test.as_ref(), cfg.batch_size, cfg.horizon)?;
                for (j, mse) in base.iter().enumerate() {
                    println!("persistence {} mse: {mse:.6}", ordinal(j));
                }
            }
        }
        Task::ForecastJsb => {
            let src = if full_test {
                data.full_test.as_ref().expect("jsb provides a full corpus")
            } else {
                &data.test
            };
            let windows = src.len();
            let (acc, clamped, silent) = evaluate_jsb(&mut model, src.as_ref(), cfg.batch_size)?;
            println!(
                "accuracy: {acc:.4} over {windows} windows ({clamped} clamped, {silent} silent)"
            );
            if persistence {
                let (acc, clamped, silent) = persistence_jsb(src.as_ref(), cfg.batch_size)?;
                println!(
                    "persistence accuracy: {acc:.4} over {windows} windows ({clamped} clamped, {silent} silent)"
                );
            }
        }
        Task::ClassifyCifar10 => {
            let (loss, acc) = evaluate_classifier(&mut model, data.test.as_ref(), cfg.batch_size)?;
            println!("test cross-entropy: {loss:.6}");
            println!("test accuracy: {acc:.4}");
        }
    }
    Ok(())
}

pub fn cmd_forecast(config: &Path, checkpoint: &Path, index: usize, k: usize, out: &Path) -> i32 {
    finish((|| -> CmdResult {
        let cfg = RunConfig::load(config)?;
        if cfg.task != Task::ForecastMnist {
            return Err(fail(
                EXIT_CONFIG,
                "frame dumps need a 2-D forecasting task (forecast-mnist)",
            ));
        }
        match cfg.precision {
            Dtype::F32 => run_forecast::<f32>(&cfg, checkpoint, index, k, out),
            Dtype::F64 => run_forecast::<f64>(&cfg, checkpoint, index, k, out),
        }
    })())
}

fn run_forecast<S: Scalar>(
    cfg: &RunConfig,
    checkpoint: &Path,
    index: usize,
    k: usize,
    out: &Path,
) -> CmdResult {
    let model_cfg = cfg.model_config()?;
    let (mut model, _) = build_model::<S>(&model_cfg, 0)?;
    load_checkpoint(checkpoint, &model_cfg, &mut model, None)?;
    let data = load_data::<S>(cfg)?;
    if index >= data.test.len() {
        return Err(fail(
            EXIT_DATA,
            format!(
                "window index {index} out of range (test split has {})",
                data.test.len()
            ),
        ));
    }
    let batch = data.test.batch(&[index]);
    let preds = model
        .forecast_serial(&batch.inputs, k)
        .map_err(|e| fail(EXIT_DATA, e))?;
    let Target::Frames(truth) = &batch.target else {
        return Err(fail(EXIT_DATA, "forecast target frames missing"));
    };
    std::fs::create_dir_all(out)?;
    let (h, w) = (preds[0].shape()[1], preds[0].shape()[2]);
    for (j, pred) in preds.iter().enumerate() {
        let path = out.join(format!("pred-{}.pgm", j + 1));
        crate::io::write_pgm(&path, w, h, pred.data())?;
        println!("wrote {}", path.display());
    }
    // Ground truth covers at most the configured horizon.
    for j in 0..k.min(truth.shape()[1]) {
        let frame = truth
            .index_axis(1, j)
            .map_err(|e| fail(EXIT_DATA, e))?;
        let path = out.join(format!("truth-{}.pgm", j + 1));
        crate::io::write_pgm(&path, w, h, frame.data())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn cmd_gradcheck(
    model: Option<&str>,
    layer: Option<&str>,
    tiny: bool,
    tolerance: Option<f64>,
    probes: usize,
    seed: u64,
) -> i32 {
    let mut all_pass = true;
    let mut check = |label: &str, sys: &mut dyn crate::layers::GradSystem, tol: f64| {
        let report = gradcheck(sys, tol, probes, seed);
        for entry in &report.entries {
            let ok = entry.max_rel_err < tol;
            println!(
                "{label:<24} {:<28} max rel err {:.3e} over {} probes  {}",
                entry.name,
                entry.max_rel_err,
                entry.probes,
                if ok { "ok" } else { "FAIL" }
            );
            all_pass &= ok;
        }
    };
    match (model, layer) {
        (Some(name), None) => {
            let mut cfg = match builtin_config(name, None) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            shrink_for_gradcheck(&mut cfg, tiny);
            let tol = tolerance.unwrap_or(1e-3);
            if cfg.is_classifier() {
                check(name, &mut ClassifySystem::new(&cfg, seed, seed ^ 0xda7a), tol);
            } else {
                check(name, &mut ChainSystem::new(&cfg, 2, seed, seed ^ 0xda7a), tol);
            }
        }
        (None, kinds) => {
            let tol = tolerance.unwrap_or(1e-4);
            let names: Vec<&str> = match kinds {
                Some(one) => vec![one],
                None => LAYER_KINDS.to_vec(),
            };
            for kind in names {
                match layer_system(kind, seed) {
                    Some(mut sys) => check(kind, sys.as_mut(), tol),
                    None => {
                        eprintln!("error: unknown layer `{kind}` (expected one of {LAYER_KINDS:?})");
                        return EXIT_CONFIG;
                    }
                }
            }
        }
        (Some(_), Some(_)) => {
            eprintln!("error: pass either --model or --layer, not both");
            return EXIT_CONFIG;
        }
    }
    if all_pass {
        println!("gradcheck passed");
        EXIT_OK
    } else {
        println!("gradcheck FAILED");
        EXIT_CHECK_FAIL
    }
}

/// Cuts widths and spatial extent so finite differences stay fast; the
/// architecture shape (cells, folding, heads) is preserved.
pub fn shrink_for_gradcheck(cfg: &mut ModelConfig, tiny: bool) {
    scale_features(cfg, if tiny { 0.125 } else { 0.25 });
    let cap = if tiny { 4 } else { 8 };
    for s in &mut cfg.spatial {
        *s = (*s).min(cap);
    }
}

pub fn cmd_params(model: Option<&str>) -> i32 {
    let names: Vec<String> = match model {
        Some(name) => vec![name.to_string()],
        None => builtin_names().iter().map(|s| s.to_string()).collect(),
    };
    for name in &names {
        let cfg = match builtin_config(name, None) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        };
        println!("{name}");
        for (component, count) in component_counts(&cfg) {
            println!("  {component:<20} {count:>10}");
        }
        let total = cfg.param_count();
        println!("  {:<20} {total:>10}", "total");
        match PUBLISHED_COUNTS.iter().find(|(n, _, _)| n == name) {
            Some(&(_, published, band)) => {
                let deviation = total as f64 / published as f64 - 1.0;
                let within = deviation.abs() <= band;
                println!(
                    "  reference {published} -> deviation {:+.1}% ({} {:.0}% band)",
                    deviation * 100.0,
                    if within { "within" } else { "OUTSIDE" },
                    band * 100.0
                );
            }
            None => println!("  no published reference total"),
        }
    }
    EXIT_OK
}

/// Per-component parameter counts, grouped by the first two name segments
/// (e.g. `block.cell1`, `incriminator.fc1`, `head.fc_a`).
fn component_counts(cfg: &ModelConfig) -> Vec<(String, usize)> {
    let (mut model, _) = build_model::<f32>(cfg, 0).expect("built-ins are buildable");
    let mut groups: Vec<(String, usize)> = Vec::new();
    model.visit_params(&mut |name, value, _| {
        let group = name
            .split('.')
            .take(2)
            .collect::<Vec<_>>()
            .join(".");
        match groups.last_mut() {
            Some((g, count)) if *g == group => *count += value.len(),
            _ => groups.push((group, value.len())),
        }
    });
    groups
}
