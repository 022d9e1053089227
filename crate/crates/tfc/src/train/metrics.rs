use crate::tensor::{Scalar, Tensor};

/// A key is played iff its value exceeds -0.5 (one quarter of the [-1, 1]
/// range), strictly.
pub fn threshold_binarize<S: Scalar>(pred: &Tensor<S>) -> Vec<bool> {
    let threshold = S::from_f64(-0.5);
    pred.data().iter().map(|&v| v > threshold).collect()
}

/// Outcome of the piano-roll accuracy formula on one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsbAccuracy {
    pub value: f64,
    /// Raw value fell outside [0, 1] and was clamped.
    pub clamped: bool,
    /// Both vectors silent; the formula's denominator was zero and the
    /// accuracy was defined as 1.
    pub silent: bool,
}

/// `acc(T, P) = 1 - Σ(Tᵢ-Pᵢ)² / Σ(Tᵢ+Pᵢ)` on boolean key vectors, where the
/// numerator is the plain sum of squared differences. Clamped to [0, 1].
pub fn jsb_accuracy(truth: &[bool], pred: &[bool]) -> JsbAccuracy {
    assert_eq!(truth.len(), pred.len());
    let mismatches = truth
        .iter()
        .zip(pred)
        .filter(|(t, p)| t != p)
        .count() as f64;
    let denominator = truth
        .iter()
        .zip(pred)
        .map(|(&t, &p)| t as u32 + p as u32)
        .sum::<u32>() as f64;
    if denominator == 0.0 {
        return JsbAccuracy {
            value: 1.0,
            clamped: false,
            silent: true,
        };
    }
    let raw = 1.0 - mismatches / denominator;
    JsbAccuracy {
        value: raw.clamp(0.0, 1.0),
        clamped: !(0.0..=1.0).contains(&raw),
        silent: false,
    }
}

/// Fraction of rows whose argmax equals the label.
pub fn classification_accuracy<S: Scalar>(probs: &Tensor<S>, labels: &[usize]) -> f64 {
    assert_eq!(probs.rank(), 2);
    assert_eq!(probs.shape()[0], labels.len());
    let classes = probs.shape()[1];
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(b, &label)| {
            let row = &probs.data()[b * classes..(b + 1) * classes];
            // Ties resolve to the first index.
            let mut argmax = 0;
            for (i, v) in row.iter().enumerate().skip(1) {
                if *v > row[argmax] {
                    argmax = i;
                }
            }
            argmax == label
        })
        .count();
    hits as f64 / labels.len().max(1) as f64
}
