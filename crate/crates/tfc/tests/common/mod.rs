//! Deterministic synthetic corpora shared by the integration suites.
//!
//! Everything here is generated from fixed seeds so repeated test runs (and
//! the determinism checks) see byte-identical files.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;
use tfc::data::{write_cifar10_file, write_npy, NpyArray, NpyData};

/// Frames per generated sprite sequence: a 10-frame input window plus one
/// target frame.
pub const SPRITE_FRAMES: usize = 11;
pub const SPRITE_SIDE: usize = 64;

/// Renders `sequences` bouncing-blob videos into a time-major u8 NPY file
/// `[frames, sequences, side, side]`.
///
/// Each sequence shows two smooth Gaussian blobs moving 2-4 px/frame and
/// reflecting off the walls. The motion is fast relative to the blob size,
/// so the copy-last-frame baseline is weak, while the dynamics are linear
/// and noise-free, so a trained model can honestly beat it.
pub fn write_moving_sprites(path: &Path, sequences: usize, seed: u64) {
    let side = SPRITE_SIDE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Per-sequence blob states: (x, y, vx, vy) in f64 pixels.
    let mut blobs: Vec<[(f64, f64, f64, f64); 2]> = (0..sequences)
        .map(|_| {
            [0, 1].map(|_| {
                let x = rng.gen_range(8.0..(side as f64 - 8.0));
                let y = rng.gen_range(8.0..(side as f64 - 8.0));
                let speed = rng.gen_range(2.0..4.0);
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                (x, y, speed * angle.cos(), speed * angle.sin())
            })
        })
        .collect();
    let plane = side * side;
    let mut pixels = vec![0u8; SPRITE_FRAMES * sequences * plane];
    let sigma2 = 2.0 * 2.5f64 * 2.5;
    for t in 0..SPRITE_FRAMES {
        for (s, state) in blobs.iter_mut().enumerate() {
            let frame = &mut pixels[(t * sequences + s) * plane..][..plane];
            for &(bx, by, _, _) in state.iter() {
                let y0 = (by - 8.0).max(0.0) as usize;
                let y1 = ((by + 8.0) as usize + 1).min(side);
                let x0 = (bx - 8.0).max(0.0) as usize;
                let x1 = ((bx + 8.0) as usize + 1).min(side);
                for y in y0..y1 {
                    for x in x0..x1 {
                        let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                        let v = (255.0 * (-d2 / sigma2).exp()).round() as u8;
                        frame[y * side + x] = frame[y * side + x].max(v);
                    }
                }
            }
            for blob in state.iter_mut() {
                blob.0 += blob.2;
                blob.1 += blob.3;
                if blob.0 < 4.0 || blob.0 > side as f64 - 4.0 {
                    blob.2 = -blob.2;
                    blob.0 += 2.0 * blob.2;
                }
                if blob.1 < 4.0 || blob.1 > side as f64 - 4.0 {
                    blob.3 = -blob.3;
                    blob.1 += 2.0 * blob.3;
                }
            }
        }
    }
    write_npy(
        path,
        &NpyArray {
            shape: vec![SPRITE_FRAMES, sequences, side, side],
            data: NpyData::U8(pixels),
        },
    )
    .unwrap();
}

/// Chorale counts and window totals matching the published corpus split:
/// 250 training chorales contributing 13,090 length-11 windows and 132
/// evaluation chorales contributing 5,809.
pub const JSB_TRAIN_CHORALES: usize = 250;
pub const JSB_EVAL_CHORALES: usize = 132;
pub const JSB_TRAIN_WINDOWS: usize = 13_090;
pub const JSB_EVAL_WINDOWS: usize = 5_809;

/// Deterministic chorale lengths: pseudo-random in a plausible band, with
/// the last chorale adjusted so window counts hit the published totals
/// exactly (windows per chorale = length - 10).
fn chorale_lengths(count: usize, total_windows: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = total_windows / count;
    let mut remaining = total_windows;
    let mut lengths = Vec::with_capacity(count);
    for i in 0..count - 1 {
        let left_after = count - 1 - i; // later chorales need >= 1 window each
        let hi = (2 * mean).min(remaining - left_after);
        let windows = rng.gen_range(1..=hi.max(1));
        remaining -= windows;
        lengths.push(10 + windows);
    }
    lengths.push(10 + remaining);
    assert_eq!(
        lengths.iter().map(|l| l - 10).sum::<usize>(),
        total_windows
    );
    lengths
}

/// One time step of a synthetic chorale: the chorale alternates between two
/// fixed many-note key patterns every step. The next step always equals the
/// step two back, so it is predictable from a 10-step context, while
/// copy-last-step is wrong on every step. Patterns are dense enough
/// (~40% of a 40-key band) that pressed keys are not vanishingly rare.
fn chorale_steps(len: usize, root: usize, stride: usize) -> Vec<Vec<u8>> {
    let pattern = |phase: usize| -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(((root * 64 + stride) * 2 + phase) as u64);
        let mut keys: Vec<u8> = (0..40)
            .filter(|_| rng.gen_bool(0.4))
            .map(|k| (21 + 30 + k) as u8) // keep pitches comfortably inside 21..=108
            .collect();
        if keys.is_empty() {
            keys.push((21 + 30 + root) as u8);
        }
        keys
    };
    let patterns = [pattern(0), pattern(1)];
    (0..len).map(|t| patterns[t % 2].clone()).collect()
}

/// Writes the synthetic chorale corpus as `{"chorales": [[[pitch, ..], ..]]}`,
/// training chorales first.
pub fn write_jsb_corpus(path: &Path) {
    let train = chorale_lengths(JSB_TRAIN_CHORALES, JSB_TRAIN_WINDOWS, 11);
    let eval = chorale_lengths(JSB_EVAL_CHORALES, JSB_EVAL_WINDOWS, 12);
    let mut chorales = Vec::new();
    for (i, len) in train.iter().chain(eval.iter()).enumerate() {
        chorales.push(chorale_steps(*len, (i * 13) % 40, 3 + (i % 4)));
    }
    let doc = serde_json::json!({ "chorales": chorales });
    let mut f = std::fs::File::create(path).unwrap();
    write!(f, "{doc}").unwrap();
}

/// Writes a learnable ten-class image corpus in the binary-batch layout:
/// `data_batch_1.bin` with `train_n` records and `test_batch.bin` with
/// `test_n`. Each class is a distinct oriented sinusoidal texture plus
/// per-image brightness jitter and pixel noise.
pub fn write_image_batches(dir: &Path, train_n: usize, test_n: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |n: usize| {
        let mut labels = Vec::with_capacity(n);
        let mut pixels = Vec::with_capacity(n * 3 * 32 * 32);
        for i in 0..n {
            let class = (i % 10) as u8;
            labels.push(class);
            let (fy, fx) = (
                0.2 + 0.15 * (class % 5) as f64,
                0.2 + 0.15 * (class / 5) as f64,
            );
            let bright = rng.gen_range(-20.0..20.0);
            for c in 0..3 {
                let phase = c as f64 * 0.8;
                for y in 0..32 {
                    for x in 0..32 {
                        let v = 127.5
                            + 90.0 * (fy * y as f64 + fx * x as f64 + phase).sin()
                            + bright
                            + rng.gen_range(-12.0..12.0);
                        pixels.push(v.clamp(0.0, 255.0) as u8);
                    }
                }
            }
        }
        (labels, pixels)
    };
    let (labels, pixels) = make(train_n);
    write_cifar10_file(&dir.join("data_batch_1.bin"), &labels, &pixels).unwrap();
    let (labels, pixels) = make(test_n);
    write_cifar10_file(&dir.join("test_batch.bin"), &labels, &pixels).unwrap();
}
