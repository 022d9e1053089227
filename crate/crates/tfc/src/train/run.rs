use super::{
    cross_entropy_from_logits, jsb_accuracy, mse_loss, threshold_binarize, Adam, Result,
    TrainError,
};
use crate::model::TfcModel;
use crate::tensor::{Scalar, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::ops::ControlFlow;
use std::time::Instant;

/// Supervision for one batch.
pub enum Target<S: Scalar> {
    /// `[batch, K, spatial.., m]`: the K frames following the input window.
    Frames(Tensor<S>),
    Labels(Vec<usize>),
}

pub struct Batch<S: Scalar> {
    pub inputs: Tensor<S>,
    pub target: Target<S>,
}

/// Anything that can materialize batches by sample index; implementations
/// may store compact raw data and convert lazily.
pub trait BatchSource<S: Scalar> {
    fn len(&self) -> usize;
    fn batch(&self, indices: &[usize]) -> Batch<S>;
}

/// In-memory source over pre-built tensors.
pub struct SliceSource<S: Scalar> {
    /// `[n, T, spatial.., m]`
    pub inputs: Tensor<S>,
    /// `[n, K, spatial.., m]` for forecasting.
    pub frames: Option<Tensor<S>>,
    pub labels: Option<Vec<usize>>,
}

/// Copies the index-selected leading-axis rows into a new tensor.
pub(crate) fn gather_rows<S: Scalar>(t: &Tensor<S>, indices: &[usize]) -> Tensor<S> {
    let row = t.len() / t.shape()[0];
    let mut shape = t.shape().to_vec();
    shape[0] = indices.len();
    let mut out = Tensor::zeros(&shape);
    for (dst, &i) in indices.iter().enumerate() {
        out.data_mut()[dst * row..(dst + 1) * row]
            .copy_from_slice(&t.data()[i * row..(i + 1) * row]);
    }
    out
}

impl<S: Scalar> BatchSource<S> for SliceSource<S> {
    fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    fn batch(&self, indices: &[usize]) -> Batch<S> {
        let inputs = gather_rows(&self.inputs, indices);
        let target = match (&self.frames, &self.labels) {
            (Some(frames), None) => Target::Frames(gather_rows(frames, indices)),
            (None, Some(labels)) => Target::Labels(indices.iter().map(|&i| labels[i]).collect()),
            _ => panic!("source needs exactly one target kind"),
        };
        Batch { inputs, target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// k-step chained forecasting under mean-over-frames mse. With
    /// `piano_roll_metric` the reported metric is the key-vector accuracy,
    /// otherwise the one-step mse.
    Forecast {
        steps: usize,
        piano_roll_metric: bool,
    },
    /// Softmax classification under cross-entropy; metric is accuracy.
    Classify,
}

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub metric: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub rows: Vec<EpochRow>,
    pub best_epoch: Option<usize>,
    pub best_val: f64,
    pub seed: u64,
}

fn batch_len<S: Scalar>(batch: &Batch<S>) -> usize {
    batch.inputs.shape()[0]
}

/// Forward + backward + loss on one batch; gradients are left accumulated
/// in the model (zeroed first).
fn train_batch<S: Scalar>(
    model: &mut TfcModel<S>,
    batch: &Batch<S>,
    mode: TrainMode,
) -> Result<f64> {
    model.zero_grads();
    model.clear_saved();
    match (mode, &batch.target) {
        (TrainMode::Forecast { steps, .. }, Target::Frames(frames)) => {
            let preds = model.forecast_chain(&batch.inputs, steps, true)?;
            let mut total = 0.0;
            let mut grads = Vec::with_capacity(steps);
            let step_scale = S::from_f64(1.0 / steps as f64);
            for (j, pred) in preds.iter().enumerate() {
                let target = frames.index_axis(1, j)?;
                let (loss, mut grad) = mse_loss(pred, &target)?;
                total += loss;
                grad.scale(step_scale);
                grads.push(grad);
            }
            model.backward_chain(&grads)?;
            Ok(total / steps as f64)
        }
        (TrainMode::Classify, Target::Labels(labels)) => {
            let logits = model.classify_logits(&batch.inputs, true)?;
            let (loss, grad, _) = cross_entropy_from_logits(&logits, labels)?;
            model.backward_classify(&grad)?;
            Ok(loss)
        }
        _ => panic!("batch target does not match the training mode"),
    }
}

fn eval_batches(n: usize, batch_size: usize) -> impl Iterator<Item = Vec<usize>> {
    let indices: Vec<usize> = (0..n).collect();
    indices
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect::<Vec<_>>()
        .into_iter()
}

/// Per-step mse of serial k-step forecasts over a whole source.
pub fn evaluate_forecaster<S: Scalar>(
    model: &mut TfcModel<S>,
    src: &dyn BatchSource<S>,
    batch_size: usize,
    steps: usize,
) -> Result<Vec<f64>> {
    if src.len() == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut sums = vec![0.0; steps];
    let mut total = 0usize;
    for chunk in eval_batches(src.len(), batch_size) {
        let batch = src.batch(&chunk);
        let Target::Frames(frames) = &batch.target else {
            panic!("forecast evaluation needs frame targets");
        };
        let preds = model.forecast_serial(&batch.inputs, steps)?;
        for (j, pred) in preds.iter().enumerate() {
            let target = frames.index_axis(1, j)?;
            let (loss, _) = mse_loss(pred, &target)?;
            sums[j] += loss * chunk.len() as f64;
        }
        total += chunk.len();
    }
    Ok(sums.into_iter().map(|s| s / total as f64).collect())
}

/// Mean piano-roll accuracy of one-step forecasts; also counts clamped and
/// both-silent windows for logging.
pub fn evaluate_jsb<S: Scalar>(
    model: &mut TfcModel<S>,
    src: &dyn BatchSource<S>,
    batch_size: usize,
) -> Result<(f64, usize, usize)> {
    if src.len() == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut sum = 0.0;
    let mut clamped = 0;
    let mut silent = 0;
    let mut total = 0;
    for chunk in eval_batches(src.len(), batch_size) {
        let batch = src.batch(&chunk);
        let Target::Frames(frames) = &batch.target else {
            panic!("forecast evaluation needs frame targets");
        };
        let pred = model.forecast_one(&batch.inputs, false)?;
        let keys = pred.len() / chunk.len();
        let pred_keys = threshold_binarize(&pred);
        let truth_keys = threshold_binarize(&frames.index_axis(1, 0)?);
        for b in 0..chunk.len() {
            let acc = jsb_accuracy(
                &truth_keys[b * keys..(b + 1) * keys],
                &pred_keys[b * keys..(b + 1) * keys],
            );
            sum += acc.value;
            clamped += acc.clamped as usize;
            silent += acc.silent as usize;
        }
        total += chunk.len();
    }
    Ok((sum / total as f64, clamped, silent))
}

/// Cross-entropy loss and accuracy over a whole labelled source.
pub fn evaluate_classifier<S: Scalar>(
    model: &mut TfcModel<S>,
    src: &dyn BatchSource<S>,
    batch_size: usize,
) -> Result<(f64, f64)> {
    if src.len() == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut loss_sum = 0.0;
    let mut hits = 0usize;
    let mut total = 0usize;
    for chunk in eval_batches(src.len(), batch_size) {
        let batch = src.batch(&chunk);
        let Target::Labels(labels) = &batch.target else {
            panic!("classification evaluation needs labels");
        };
        let logits = model.classify_logits(&batch.inputs, false)?;
        let (loss, _, probs) = cross_entropy_from_logits(&logits, labels)?;
        loss_sum += loss * chunk.len() as f64;
        hits += (super::classification_accuracy(&probs, labels) * labels.len() as f64).round()
            as usize;
        total += chunk.len();
    }
    Ok((loss_sum / total as f64, hits as f64 / total as f64))
}

/// Per-step mse of the copy-last-frame predictor.
pub fn persistence_forecast_mse<S: Scalar>(
    src: &dyn BatchSource<S>,
    batch_size: usize,
    steps: usize,
) -> Result<Vec<f64>> {
    if src.len() == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut sums = vec![0.0; steps];
    let mut total = 0usize;
    for chunk in eval_batches(src.len(), batch_size) {
        let batch = src.batch(&chunk);
        let Target::Frames(frames) = &batch.target else {
            panic!("forecast evaluation needs frame targets");
        };
        let t = batch.inputs.shape()[1];
        let last = batch.inputs.index_axis(1, t - 1)?;
        for (j, sum) in sums.iter_mut().enumerate() {
            let target = frames.index_axis(1, j)?;
            let (loss, _) = mse_loss(&last, &target)?;
            *sum += loss * chunk.len() as f64;
        }
        total += chunk.len();
    }
    Ok(sums.into_iter().map(|s| s / total as f64).collect())
}

/// Piano-roll accuracy of the copy-last-frame predictor.
pub fn persistence_jsb<S: Scalar>(
    src: &dyn BatchSource<S>,
    batch_size: usize,
) -> Result<(f64, usize, usize)> {
    if src.len() == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut sum = 0.0;
    let mut clamped = 0;
    let mut silent = 0;
    let mut total = 0;
    for chunk in eval_batches(src.len(), batch_size) {
        let batch = src.batch(&chunk);
        let Target::Frames(frames) = &batch.target else {
            panic!("forecast evaluation needs frame targets");
        };
        let t = batch.inputs.shape()[1];
        let last = batch.inputs.index_axis(1, t - 1)?;
        let keys = last.len() / chunk.len();
        let pred_keys = threshold_binarize(&last);
        let truth_keys = threshold_binarize(&frames.index_axis(1, 0)?);
        for b in 0..chunk.len() {
            let acc = jsb_accuracy(
                &truth_keys[b * keys..(b + 1) * keys],
                &pred_keys[b * keys..(b + 1) * keys],
            );
            sum += acc.value;
            clamped += acc.clamped as usize;
            silent += acc.silent as usize;
        }
        total += chunk.len();
    }
    Ok((sum / total as f64, clamped, silent))
}

fn validation_row<S: Scalar>(
    model: &mut TfcModel<S>,
    val: &dyn BatchSource<S>,
    batch_size: usize,
    mode: TrainMode,
) -> Result<(f64, f64)> {
    match mode {
        TrainMode::Forecast {
            steps,
            piano_roll_metric,
        } => {
            let per_step = evaluate_forecaster(model, val, batch_size, steps)?;
            let val_loss = per_step.iter().sum::<f64>() / steps as f64;
            let metric = if piano_roll_metric {
                evaluate_jsb(model, val, batch_size)?.0
            } else {
                per_step[0]
            };
            Ok((val_loss, metric))
        }
        TrainMode::Classify => {
            let (loss, acc) = evaluate_classifier(model, val, batch_size)?;
            Ok((loss, acc))
        }
    }
}

/// The epoch loop: seeded shuffling (remainder batch kept), Adam updates,
/// per-epoch validation, best-validation tracking. `on_epoch` runs after
/// every epoch with the freshly measured row and whether it is the new best
/// validation loss, so callers can persist checkpoints; returning
/// `ControlFlow::Break(())` stops training after that epoch.
pub fn train<S: Scalar>(
    model: &mut TfcModel<S>,
    settings: &TrainSettings,
    mode: TrainMode,
    train_src: &dyn BatchSource<S>,
    val_src: &dyn BatchSource<S>,
    optimizer: &mut Adam<S>,
    on_epoch: &mut dyn FnMut(&mut TfcModel<S>, &EpochRow, bool) -> ControlFlow<()>,
) -> Result<TrainReport> {
    if train_src.len() == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut report = TrainReport {
        rows: Vec::new(),
        best_epoch: None,
        best_val: f64::INFINITY,
        seed: settings.seed,
    };
    let mut indices: Vec<usize> = (0..train_src.len()).collect();
    for epoch in 1..=settings.epochs {
        let started = Instant::now();
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_no, chunk) in indices.chunks(settings.batch_size.max(1)).enumerate() {
            let batch = train_src.batch(chunk);
            let loss = train_batch(model, &batch, mode)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_no,
                });
            }
            optimizer.begin_step();
            model.visit_params(&mut |name, value, grad| {
                optimizer.update(name, value, grad);
            });
            loss_sum += loss * batch_len(&batch) as f64;
            seen += batch_len(&batch);
        }
        let (val_loss, metric) = validation_row(model, val_src, settings.batch_size, mode)?;
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged { epoch, batch: 0 });
        }
        let row = EpochRow {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss,
            metric,
            seconds: started.elapsed().as_secs_f64(),
        };
        let is_best = val_loss < report.best_val;
        if is_best {
            report.best_val = val_loss;
            report.best_epoch = Some(epoch);
        }
        let flow = on_epoch(model, &row, is_best);
        report.rows.push(row);
        if flow.is_break() {
            break;
        }
    }
    Ok(report)
}
