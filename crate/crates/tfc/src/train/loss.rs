use super::{Result, TrainError};
use crate::layers::{Activation, ActivationLayer};
use crate::tensor::{Scalar, Tensor, TensorError};

/// Mean squared error over every element, with its gradient
/// `2 (pred - target) / count`.
pub fn mse_loss<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<(f64, Tensor<S>)> {
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            left: pred.shape().to_vec(),
            right: target.shape().to_vec(),
            context: "mse",
        }
        .into());
    }
    let count = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    let scale = S::from_f64(2.0 / count);
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let d = (p - t).as_f64();
        loss += d * d;
        *g = (p - t) * scale;
    }
    Ok((loss / count, grad))
}

/// Categorical cross-entropy on raw logits: returns the batch-mean loss, the
/// gradient at the logits (`(softmax - onehot) / batch`), and the softmax
/// probabilities for accuracy bookkeeping.
pub fn cross_entropy_from_logits<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
) -> Result<(f64, Tensor<S>, Tensor<S>)> {
    assert_eq!(logits.rank(), 2, "logits are [batch, classes]");
    let (batch, classes) = (logits.shape()[0], logits.shape()[1]);
    assert_eq!(labels.len(), batch);
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(TrainError::LabelOutOfRange(bad, classes));
    }
    let probs = ActivationLayer::apply(Activation::Softmax, logits);
    let mut loss = 0.0;
    let mut grad = probs.clone();
    let inv_batch = S::from_f64(1.0 / batch as f64);
    for (b, &label) in labels.iter().enumerate() {
        let p = probs.at(&[b, label]).as_f64().max(1e-300);
        loss -= p.ln();
        let idx = grad.flat_index(&[b, label]);
        grad.data_mut()[idx] = grad.data()[idx] - S::one();
    }
    grad.scale(inv_batch);
    Ok((loss / batch as f64, grad, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_zero_when_equal() {
        let a = Tensor::from_fn(&[2, 3], |i| i[1] as f64 - 0.5);
        let (loss, grad) = mse_loss(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mse_constant_offset_squares() {
        let a = Tensor::full(&[4, 2], 0.7);
        let b = Tensor::full(&[4, 2], 0.4);
        let (loss, _) = mse_loss(&a, &b).unwrap();
        assert!((loss - 0.09).abs() < 1e-12);
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let pred = Tensor::from_fn(&[2, 3], |i| (i[0] * 3 + i[1]) as f64 * 0.11 - 0.3);
        let target = Tensor::from_fn(&[2, 3], |i| (i[1]) as f64 * 0.07);
        let (_, grad) = mse_loss(&pred, &target).unwrap();
        let eps = 1e-6;
        for idx in 0..pred.len() {
            let mut plus = pred.clone();
            plus.data_mut()[idx] += eps;
            let mut minus = pred.clone();
            minus.data_mut()[idx] -= eps;
            let numeric = (mse_loss(&plus, &target).unwrap().0
                - mse_loss(&minus, &target).unwrap().0)
                / (2.0 * eps);
            assert!((numeric - grad.data()[idx]).abs() < 1e-6);
        }
    }

    #[test]
    fn mse_shape_mismatch_is_rejected() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[3, 2]);
        assert!(mse_loss(&a, &b).is_err());
    }

    #[test]
    fn cross_entropy_perfect_prediction_is_zero() {
        // Strongly peaked logits on the true class.
        let logits = Tensor::<f64>::from_fn(&[2, 4], |i| if i[1] == i[0] { 60.0 } else { 0.0 });
        let (loss, _, probs) = cross_entropy_from_logits(&logits, &[0, 1]).unwrap();
        assert!(loss < 1e-12, "{loss}");
        assert!((probs.at(&[0, 0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_k() {
        let logits = Tensor::<f64>::zeros(&[3, 10]);
        let (loss, _, _) = cross_entropy_from_logits(&logits, &[0, 5, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = Tensor::from_fn(&[2, 5], |i| (i[0] as f64 - 0.4) * (i[1] as f64 * 0.3 - 0.6));
        let labels = [3, 1];
        let (_, grad, _) = cross_entropy_from_logits(&logits, &labels).unwrap();
        let eps = 1e-5;
        for idx in 0..logits.len() {
            let mut plus = logits.clone();
            plus.data_mut()[idx] += eps;
            let mut minus = logits.clone();
            minus.data_mut()[idx] -= eps;
            let numeric = (cross_entropy_from_logits(&plus, &labels).unwrap().0
                - cross_entropy_from_logits(&minus, &labels).unwrap().0)
                / (2.0 * eps);
            assert!(
                (numeric - grad.data()[idx]).abs() < 1e-5,
                "idx {idx}: {numeric} vs {}",
                grad.data()[idx]
            );
        }
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        let logits = Tensor::<f64>::zeros(&[1, 4]);
        assert!(matches!(
            cross_entropy_from_logits(&logits, &[4]),
            Err(TrainError::LabelOutOfRange(4, 4))
        ));
    }
}
