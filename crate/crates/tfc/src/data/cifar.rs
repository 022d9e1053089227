//! CIFAR-10 binary batches: 3073-byte records (label + planar RGB 32×32).

use super::{rescale_u8, DataError, Result};
use crate::tensor::{Scalar, Tensor};
use crate::train::{Batch, BatchSource, Target};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
const PLANE: usize = SIDE * SIDE;
const RECORD: usize = 1 + CHANNELS * PLANE;

/// Loaded images kept in the on-disk planar layout.
pub struct Cifar {
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl Cifar {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Planar pixel lookup: channel plane, then row-major position.
    pub fn pixel(&self, image: usize, channel: usize, y: usize, x: usize) -> u8 {
        self.pixels[image * CHANNELS * PLANE + channel * PLANE + y * SIDE + x]
    }

    fn append_file(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        if bytes.is_empty() || bytes.len() % RECORD != 0 {
            return Err(DataError::BadRecordSize {
                path: path.display().to_string(),
                size: bytes.len() as u64,
            });
        }
        for (record, chunk) in bytes.chunks_exact(RECORD).enumerate() {
            if chunk[0] > 9 {
                return Err(DataError::BadLabel {
                    path: path.display().to_string(),
                    record,
                    label: chunk[0],
                });
            }
            self.labels.push(chunk[0]);
            self.pixels.extend_from_slice(&chunk[1..]);
        }
        Ok(())
    }

    /// A batch source over the first `limit` images (or all, if larger).
    pub fn source(self: &Arc<Self>, limit: usize) -> CifarSource {
        CifarSource {
            data: Arc::clone(self),
            images: (0..self.len().min(limit)).collect(),
        }
    }
}

pub fn load_cifar10_file(path: &Path) -> Result<Cifar> {
    let mut out = Cifar {
        pixels: Vec::new(),
        labels: Vec::new(),
    };
    out.append_file(path)?;
    Ok(out)
}

/// Loads a standard directory: `data_batch_*.bin` (sorted) as the training
/// set and `test_batch.bin` as the test set.
pub fn load_cifar10_dir(dir: &Path) -> Result<(Cifar, Cifar)> {
    let mut names: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("data_batch_") && n.ends_with(".bin"))
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(DataError::NoBatchFiles(dir.display().to_string()));
    }
    let mut train = Cifar {
        pixels: Vec::new(),
        labels: Vec::new(),
    };
    for name in &names {
        train.append_file(name)?;
    }
    let test = load_cifar10_file(&dir.join("test_batch.bin"))?;
    Ok((train, test))
}

/// Writes records in the binary-batch format (fixture/tooling helper).
pub fn write_cifar10_file(path: &Path, labels: &[u8], pixels: &[u8]) -> Result<()> {
    assert_eq!(pixels.len(), labels.len() * CHANNELS * PLANE);
    let mut file = fs::File::create(path)?;
    for (i, &label) in labels.iter().enumerate() {
        file.write_all(&[label])?;
        file.write_all(&pixels[i * CHANNELS * PLANE..(i + 1) * CHANNELS * PLANE])?;
    }
    Ok(())
}

/// Presents images as 32-step sequences of rows: `[batch, 32, 32, 3]` with
/// the row index on the time axis and channels as features.
pub struct CifarSource {
    data: Arc<Cifar>,
    images: Vec<usize>,
}

impl CifarSource {
    pub fn image_indices(&self) -> &[usize] {
        &self.images
    }
}

impl<S: Scalar> BatchSource<S> for CifarSource {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn batch(&self, indices: &[usize]) -> Batch<S> {
        let b = indices.len();
        let mut inputs = Tensor::zeros(&[b, SIDE, SIDE, CHANNELS]);
        let mut labels = Vec::with_capacity(b);
        for (row, &i) in indices.iter().enumerate() {
            let image = self.images[i];
            labels.push(self.data.label(image));
            let dst = &mut inputs.data_mut()[row * SIDE * SIDE * CHANNELS..][..SIDE * SIDE * CHANNELS];
            for y in 0..SIDE {
                for x in 0..SIDE {
                    for c in 0..CHANNELS {
                        dst[(y * SIDE + x) * CHANNELS + c] =
                            S::from_f64(rescale_u8(self.data.pixel(image, c, y, x)));
                    }
                }
            }
        }
        Batch {
            inputs,
            target: Target::Labels(labels),
        }
    }
}
