//! 8-bit binary PGM (P5) frame dumps.

use crate::tensor::Scalar;
use std::io::Write;
use std::path::Path;

/// Maps a `[-1, 1]` frame to P5 bytes: `v ↦ (v+1)/2·255`, clamped.
pub fn frame_to_pgm<S: Scalar>(width: usize, height: usize, values: &[S]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        ((v.as_f64() + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8
    }));
    out
}

pub fn write_pgm<S: Scalar>(
    path: &Path,
    width: usize,
    height: usize,
    values: &[S],
) -> std::io::Result<()> {
    std::fs::File::create(path)?.write_all(&frame_to_pgm(width, height, values))
}
