//! Moving-digit sequence windowing: 10 input frames predicting the next K,
//! with a seeded 80/10/10 sequence-level split.

use super::{rescale_u8, DataError, NpyArray, NpyData, Result};
use crate::tensor::{Scalar, Tensor};
use crate::train::{Batch, BatchSource, Target};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

pub const INPUT_FRAMES: usize = 10;

/// The raw archive, kept as u8 pixels; frames are stored time-major:
/// `[frames, sequences, height, width]`.
pub struct MovingMnist {
    pixels: Vec<u8>,
    frames: usize,
    sequences: usize,
    height: usize,
    width: usize,
}

impl MovingMnist {
    pub fn from_npy(raw: NpyArray) -> Result<Self> {
        if raw.shape.len() != 4 {
            return Err(DataError::BadShape {
                expected: "(frames, sequences, height, width)".into(),
                found: raw.shape,
            });
        }
        let pixels = match raw.data {
            NpyData::U8(v) => v,
            _ => return Err(DataError::UnsupportedDtype("expected u8 pixels".into())),
        };
        Ok(MovingMnist {
            pixels,
            frames: raw.shape[0],
            sequences: raw.shape[1],
            height: raw.shape[2],
            width: raw.shape[3],
        })
    }

    pub fn sequences(&self) -> usize {
        self.sequences
    }

    pub fn frame_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn frame(&self, t: usize, seq: usize) -> &[u8] {
        let size = self.height * self.width;
        let offset = (t * self.sequences + seq) * size;
        &self.pixels[offset..offset + size]
    }
}

/// One split of the archive; converts windows to `[-1, 1]` tensors lazily.
pub struct MnistSplit {
    data: Arc<MovingMnist>,
    sequences: Vec<usize>,
    horizon: usize,
}

impl MnistSplit {
    /// Provenance: archive sequence indices backing this split.
    pub fn sequence_indices(&self) -> &[usize] {
        &self.sequences
    }

    /// Restricts the split to its first `n` sequences (desk-scale subsets).
    pub fn truncate(&mut self, n: usize) {
        self.sequences.truncate(n);
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

impl<S: Scalar> BatchSource<S> for MnistSplit {
    fn len(&self) -> usize {
        self.sequences.len()
    }

    fn batch(&self, indices: &[usize]) -> Batch<S> {
        let (h, w) = self.data.frame_shape();
        let b = indices.len();
        let mut inputs = Tensor::zeros(&[b, INPUT_FRAMES, h, w, 1]);
        let mut frames = Tensor::zeros(&[b, self.horizon, h, w, 1]);
        let size = h * w;
        for (row, &i) in indices.iter().enumerate() {
            let seq = self.sequences[i];
            for t in 0..INPUT_FRAMES {
                let src = self.data.frame(t, seq);
                let dst = &mut inputs.data_mut()[(row * INPUT_FRAMES + t) * size..][..size];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = S::from_f64(rescale_u8(v));
                }
            }
            for j in 0..self.horizon {
                let src = self.data.frame(INPUT_FRAMES + j, seq);
                let dst = &mut frames.data_mut()[(row * self.horizon + j) * size..][..size];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = S::from_f64(rescale_u8(v));
                }
            }
        }
        Batch {
            inputs,
            target: Target::Frames(frames),
        }
    }
}

/// Seeded 80/10/10 split by sequence, each sequence contributing one
/// (10-frame input, K-frame target) pair.
pub fn window_moving_mnist(
    raw: NpyArray,
    horizon: usize,
    split_seed: u64,
) -> Result<(MnistSplit, MnistSplit, MnistSplit)> {
    let data = Arc::new(MovingMnist::from_npy(raw)?);
    let available = data.frames.saturating_sub(INPUT_FRAMES);
    if horizon == 0 || horizon > available {
        return Err(DataError::HorizonTooLarge {
            k: horizon,
            available,
        });
    }
    let mut order: Vec<usize> = (0..data.sequences).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let n_train = data.sequences * 80 / 100;
    let n_val = data.sequences * 10 / 100;
    let split = |sequences: Vec<usize>| MnistSplit {
        data: Arc::clone(&data),
        sequences,
        horizon,
    };
    let val = order.split_off(n_train);
    let (val, test) = {
        let mut val = val;
        let test = val.split_off(n_val.min(val.len()));
        (val, test)
    };
    Ok((split(order), split(val), split(test)))
}
