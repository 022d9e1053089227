//! Piano-roll chorale corpus: JSON loading, length-11 windowing, and the
//! chorale-level train/val/test splits.

use super::{DataError, Result};
use crate::tensor::{Scalar, Tensor};
use crate::train::{Batch, BatchSource, Target};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::sync::Arc;

/// 88 piano keys; key index = MIDI pitch − 21.
pub const KEYS: usize = 88;
const WINDOW: usize = 11;

/// One chorale as a sequence of boolean key vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chorale(pub Vec<[bool; KEYS]>);

impl Chorale {
    /// Length-11 windows this chorale contributes (L − 10, or 0 if short).
    pub fn window_count(&self) -> usize {
        self.0.len().saturating_sub(WINDOW - 1)
    }
}

/// Parses `{"chorales": [[[pitch, ...], ...], ...]}`; repeated pitches in a
/// step collapse to one pressed key.
pub fn load_jsb_json(path: &Path) -> Result<Vec<Chorale>> {
    let text = std::fs::read_to_string(path)?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| DataError::BadJson(e.to_string()))?;
    let chorales = doc
        .get("chorales")
        .and_then(|v| v.as_array())
        .ok_or_else(|| DataError::BadJson("expected top-level \"chorales\" array".into()))?;
    let mut out = Vec::with_capacity(chorales.len());
    for chorale in chorales {
        let steps = chorale
            .as_array()
            .ok_or_else(|| DataError::BadJson("chorale is not an array of steps".into()))?;
        let mut parsed = Vec::with_capacity(steps.len());
        for step in steps {
            let pitches = step
                .as_array()
                .ok_or_else(|| DataError::BadJson("step is not an array of pitches".into()))?;
            let mut keys = [false; KEYS];
            for pitch in pitches {
                let p = pitch
                    .as_i64()
                    .ok_or_else(|| DataError::BadJson("pitch is not an integer".into()))?;
                if !(21..=108).contains(&p) {
                    return Err(DataError::PitchOutOfRange(p));
                }
                keys[(p - 21) as usize] = true;
            }
            parsed.push(keys);
        }
        out.push(Chorale(parsed));
    }
    Ok(out)
}

/// Window set over shared chorales; converts to ±1 tensors lazily.
pub struct JsbWindows {
    chorales: Arc<Vec<Chorale>>,
    /// Provenance: (chorale index, window start).
    windows: Vec<(usize, usize)>,
}

impl JsbWindows {
    pub fn provenance(&self) -> &[(usize, usize)] {
        &self.windows
    }

    pub fn truncate(&mut self, n: usize) {
        self.windows.truncate(n);
    }
}

impl<S: Scalar> BatchSource<S> for JsbWindows {
    fn len(&self) -> usize {
        self.windows.len()
    }

    fn batch(&self, indices: &[usize]) -> Batch<S> {
        let b = indices.len();
        let mut inputs = Tensor::zeros(&[b, WINDOW - 1, KEYS, 1]);
        let mut frames = Tensor::zeros(&[b, 1, KEYS, 1]);
        let on = S::from_f64(1.0);
        let off = S::from_f64(-1.0);
        for (row, &i) in indices.iter().enumerate() {
            let (chorale, start) = self.windows[i];
            let steps = &self.chorales[chorale].0;
            for t in 0..WINDOW - 1 {
                let dst = &mut inputs.data_mut()[(row * (WINDOW - 1) + t) * KEYS..][..KEYS];
                for (d, &k) in dst.iter_mut().zip(&steps[start + t]) {
                    *d = if k { on } else { off };
                }
            }
            let dst = &mut frames.data_mut()[row * KEYS..][..KEYS];
            for (d, &k) in dst.iter_mut().zip(&steps[start + WINDOW - 1]) {
                *d = if k { on } else { off };
            }
        }
        Batch {
            inputs,
            target: Target::Frames(frames),
        }
    }
}

pub struct JsbSplits {
    pub train: JsbWindows,
    pub val: JsbWindows,
    pub test: JsbWindows,
    /// The whole evaluation corpus (val ∪ test) for full-set reporting.
    pub full_test: JsbWindows,
}

fn windows_of(chorales: &[Chorale], ids: impl Iterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for c in ids {
        for start in 0..chorales[c].window_count() {
            out.push((c, start));
        }
    }
    out
}

/// All overlapping length-11 windows. The first `train_chorales` entries form
/// the training corpus; the remainder is the evaluation corpus, divided into
/// val/test halves at the *chorale* level (seeded) so windows from one
/// chorale never straddle splits.
pub fn window_jsb(chorales: Vec<Chorale>, train_chorales: usize, split_seed: u64) -> JsbSplits {
    let train_chorales = train_chorales.min(chorales.len());
    let chorales = Arc::new(chorales);
    let train = windows_of(&chorales, 0..train_chorales);
    let full_test = windows_of(&chorales, train_chorales..chorales.len());

    let mut eval_ids: Vec<usize> = (train_chorales..chorales.len()).collect();
    eval_ids.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let target = full_test.len() / 2;
    let mut val_ids = Vec::new();
    let mut test_ids = Vec::new();
    let mut val_windows = 0;
    for c in eval_ids {
        let n = chorales[c].window_count();
        if val_windows + n <= target || val_ids.is_empty() {
            val_windows += n;
            val_ids.push(c);
        } else {
            test_ids.push(c);
        }
    }
    let make = |windows: Vec<(usize, usize)>| JsbWindows {
        chorales: Arc::clone(&chorales),
        windows,
    };
    JsbSplits {
        train: make(train),
        val: make(windows_of(&chorales, val_ids.into_iter())),
        test: make(windows_of(&chorales, test_ids.into_iter())),
        full_test: make(full_test),
    }
}
