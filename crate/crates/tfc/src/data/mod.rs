//! Dataset loaders and windowing: NPY sequence archives, piano-roll JSON
//! corpora, and CIFAR-10 binary batches, plus the seeded splits and the
//! [-1, 1] rescaling the models expect.

mod cifar;
mod jsb;
mod mnist;
mod npy;

pub use cifar::{load_cifar10_dir, load_cifar10_file, write_cifar10_file, Cifar, CifarSource};
pub use jsb::{load_jsb_json, window_jsb, Chorale, JsbSplits, JsbWindows, KEYS};
pub use mnist::{window_moving_mnist, MnistSplit, MovingMnist};
pub use npy::{load_npy, write_npy, NpyArray, NpyData};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an NPY file (bad magic)")]
    BadMagic,
    #[error("unsupported NPY version {0}.{1}")]
    UnsupportedVersion(u8, u8),
    #[error("unsupported NPY dtype {0:?}")]
    UnsupportedDtype(String),
    #[error("Fortran-order arrays are not supported")]
    FortranOrder,
    #[error("malformed NPY header: {0}")]
    BadHeader(String),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unexpected array shape {found:?}, expected {expected}")]
    BadShape { expected: String, found: Vec<usize> },
    #[error("forecast horizon {k} exceeds the {available} frames after the input window")]
    HorizonTooLarge { k: usize, available: usize },
    #[error("malformed piano-roll JSON: {0}")]
    BadJson(String),
    #[error("MIDI pitch {0} outside the 88-key range [21, 108]")]
    PitchOutOfRange(i64),
    #[error("{path}: size {size} is not a multiple of the 3073-byte record")]
    BadRecordSize { path: String, size: u64 },
    #[error("{path}: record {record} has label {label} > 9")]
    BadLabel {
        path: String,
        record: usize,
        label: u8,
    },
    #[error("no CIFAR-10 batch files found in {0}")]
    NoBatchFiles(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Model-side pixel scale: u8 0..=255 onto [-1, 1].
pub fn rescale_u8(v: u8) -> f64 {
    v as f64 / 255.0 * 2.0 - 1.0
}

/// Inverse of [`rescale_u8`]; exact on every representable value.
pub fn unscale_u8(v: f64) -> u8 {
    ((v + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8
}
