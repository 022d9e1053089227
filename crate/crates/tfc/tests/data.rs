//! Loader and windowing contracts: byte-level format fixtures, rescaling
//! bijection, split determinism and leakage checks.

use std::io::Write;
use tfc::data::{
    load_cifar10_file, load_jsb_json, load_npy, rescale_u8, unscale_u8, window_jsb,
    window_moving_mnist, write_cifar10_file, write_npy, Chorale, DataError, NpyArray, NpyData,
    KEYS,
};
use tfc::train::{BatchSource, Target};

fn write_bytes(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::File::create(&path)
        .unwrap()
        .write_all(bytes)
        .unwrap();
    path
}

/// A 2×2 u8 file assembled by hand, independent of our own writer.
fn npy_2x2_bytes(fortran: bool) -> Vec<u8> {
    let header = format!(
        "{{'descr': '|u1', 'fortran_order': {}, 'shape': (2, 2), }}",
        if fortran { "True" } else { "False" }
    );
    let mut padded = header.clone();
    let unpadded = 10 + header.len() + 1;
    padded.push_str(&" ".repeat(unpadded.div_ceil(64) * 64 - unpadded));
    padded.push('\n');
    let mut bytes = b"\x93NUMPY\x01\x00".to_vec();
    bytes.extend_from_slice(&(padded.len() as u16).to_le_bytes());
    bytes.extend_from_slice(padded.as_bytes());
    bytes.extend_from_slice(&[1, 2, 3, 4]);
    bytes
}

#[test]
fn hand_written_npy_fixture_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_bytes(&dir, "a.npy", &npy_2x2_bytes(false));
    let arr = load_npy(&path).unwrap();
    assert_eq!(arr.shape, vec![2, 2]);
    match arr.data {
        NpyData::U8(v) => assert_eq!(v, vec![1, 2, 3, 4]),
        other => panic!("wrong dtype: {other:?}"),
    }
}

#[test]
fn fortran_order_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_bytes(&dir, "f.npy", &npy_2x2_bytes(true));
    assert!(matches!(load_npy(&path), Err(DataError::FortranOrder)));
}

#[test]
fn bad_magic_and_truncation_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_bytes(&dir, "bad.npy", b"\x89PNG not numpy");
    assert!(matches!(load_npy(&path), Err(DataError::BadMagic)));

    let mut short = npy_2x2_bytes(false);
    short.truncate(short.len() - 2);
    let path = write_bytes(&dir, "short.npy", &short);
    assert!(matches!(load_npy(&path), Err(DataError::Truncated { .. })));
}

#[test]
fn npy_float_round_trips_through_writer() {
    let dir = tempfile::tempdir().unwrap();
    for data in [
        NpyData::F32(vec![0.5, -1.25, 3.0e-7, 42.0, 0.0, 1.0]),
        NpyData::F64(vec![0.5, -1.25, 3.0e-17, 42.0, 0.0, 1.0]),
    ] {
        let path = dir.path().join("rt.npy");
        write_npy(
            &path,
            &NpyArray {
                shape: vec![2, 3],
                data,
            },
        )
        .unwrap();
        let arr = load_npy(&path).unwrap();
        assert_eq!(arr.shape, vec![2, 3]);
        match arr.data {
            NpyData::F32(v) => assert_eq!(v, vec![0.5, -1.25, 3.0e-7, 42.0, 0.0, 1.0]),
            NpyData::F64(v) => assert_eq!(v, vec![0.5, -1.25, 3.0e-17, 42.0, 0.0, 1.0]),
            other => panic!("wrong dtype: {other:?}"),
        }
    }
}

#[test]
fn pixel_rescale_is_a_bijection() {
    assert_eq!(rescale_u8(0), -1.0);
    assert_eq!(rescale_u8(255), 1.0);
    for v in 0..=255u8 {
        assert_eq!(unscale_u8(rescale_u8(v)), v);
    }
}

/// Archive where pixel value = (frame + seq) % 256, easy to trace.
fn tiny_archive(frames: usize, sequences: usize, side: usize) -> NpyArray {
    let mut pixels = Vec::new();
    for t in 0..frames {
        for s in 0..sequences {
            pixels.extend(std::iter::repeat(((t + s) % 256) as u8).take(side * side));
        }
    }
    NpyArray {
        shape: vec![frames, sequences, side, side],
        data: NpyData::U8(pixels),
    }
}

#[test]
fn moving_mnist_split_sizes_and_determinism() {
    let (train, val, test) = window_moving_mnist(tiny_archive(20, 50, 4), 3, 9).unwrap();
    assert_eq!(train.sequence_indices().len(), 40);
    assert_eq!(val.sequence_indices().len(), 5);
    assert_eq!(test.sequence_indices().len(), 5);

    let (train2, ..) = window_moving_mnist(tiny_archive(20, 50, 4), 3, 9).unwrap();
    assert_eq!(train.sequence_indices(), train2.sequence_indices());
    let (train3, ..) = window_moving_mnist(tiny_archive(20, 50, 4), 3, 10).unwrap();
    assert_ne!(train.sequence_indices(), train3.sequence_indices());

    let mut all: Vec<usize> = train
        .sequence_indices()
        .iter()
        .chain(val.sequence_indices())
        .chain(test.sequence_indices())
        .copied()
        .collect();
    all.sort();
    assert_eq!(all, (0..50).collect::<Vec<_>>());
}

#[test]
fn moving_mnist_windows_are_consecutive_and_rescaled() {
    let (train, ..) = window_moving_mnist(tiny_archive(20, 10, 4), 3, 1).unwrap();
    let batch = BatchSource::<f64>::batch(&train, &[0, 1]);
    assert_eq!(batch.inputs.shape(), &[2, 10, 4, 4, 1]);
    let Target::Frames(frames) = &batch.target else {
        panic!("expected frames");
    };
    assert_eq!(frames.shape(), &[2, 3, 4, 4, 1]);
    for (row, &seq) in train.sequence_indices()[..2].iter().enumerate() {
        for t in 0..10 {
            let want = rescale_u8(((t + seq) % 256) as u8);
            assert_eq!(batch.inputs.at(&[row, t, 0, 0, 0]), want);
        }
        for j in 0..3 {
            let want = rescale_u8(((10 + j + seq) % 256) as u8);
            assert_eq!(frames.at(&[row, j, 2, 1, 0]), want);
        }
    }
}

#[test]
fn oversized_horizon_is_rejected() {
    match window_moving_mnist(tiny_archive(20, 6, 4), 11, 0) {
        Err(DataError::HorizonTooLarge { k: 11, available: 10 }) => {}
        Err(other) => panic!("wrong error: {other}"),
        Ok(_) => panic!("horizon 11 should not fit in 20 frames"),
    }
}

#[test]
fn chorale_steps_map_pitches_and_dedupe() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_bytes(
        &dir,
        "c.json",
        br#"{"chorales": [[[60, 64, 67], [], [60, 60, 21, 108]]]}"#,
    );
    let chorales = load_jsb_json(&path).unwrap();
    assert_eq!(chorales.len(), 1);
    let steps = &chorales[0].0;
    let on = |step: &[bool; KEYS]| -> Vec<usize> {
        step.iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    };
    assert_eq!(on(&steps[0]), vec![39, 43, 46]);
    assert_eq!(on(&steps[1]), Vec::<usize>::new());
    assert_eq!(on(&steps[2]), vec![0, 39, 87]);
}

#[test]
fn out_of_range_pitches_and_bad_json_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_bytes(&dir, "bad.json", br#"{"chorales": [[[20]]]}"#);
    assert!(matches!(
        load_jsb_json(&path),
        Err(DataError::PitchOutOfRange(20))
    ));
    let path = write_bytes(&dir, "high.json", br#"{"chorales": [[[109]]]}"#);
    assert!(matches!(
        load_jsb_json(&path),
        Err(DataError::PitchOutOfRange(109))
    ));
    let path = write_bytes(&dir, "junk.json", b"{nope");
    assert!(matches!(load_jsb_json(&path), Err(DataError::BadJson(_))));
    let path = write_bytes(&dir, "nokey.json", br#"{"songs": []}"#);
    assert!(matches!(load_jsb_json(&path), Err(DataError::BadJson(_))));
}

fn constant_chorale(len: usize, key: usize) -> Chorale {
    let mut step = [false; KEYS];
    step[key] = true;
    Chorale(vec![step; len])
}

#[test]
fn window_counts_at_the_length_boundary() {
    assert_eq!(constant_chorale(11, 0).window_count(), 1);
    assert_eq!(constant_chorale(10, 0).window_count(), 0);
    assert_eq!(constant_chorale(25, 0).window_count(), 15);
}

#[test]
fn jsb_split_keeps_chorales_whole() {
    let chorales: Vec<Chorale> = (0..12)
        .map(|i| constant_chorale(11 + i * 3, i % KEYS))
        .collect();
    let total_eval: usize = chorales[4..].iter().map(|c| c.window_count()).sum();
    let splits = window_jsb(chorales, 4, 2);
    assert_eq!(
        BatchSource::<f64>::len(&splits.full_test),
        total_eval
    );
    assert_eq!(
        BatchSource::<f64>::len(&splits.val) + BatchSource::<f64>::len(&splits.test),
        total_eval
    );
    // No chorale contributes windows to both halves.
    let ids = |w: &tfc::data::JsbWindows| -> std::collections::BTreeSet<usize> {
        w.provenance().iter().map(|&(c, _)| c).collect()
    };
    assert!(ids(&splits.val).is_disjoint(&ids(&splits.test)));
    assert!(ids(&splits.train).is_disjoint(&ids(&splits.full_test)));
    // Both halves are within one chorale's windows of an even split.
    let val = BatchSource::<f64>::len(&splits.val) as isize;
    assert!((val - (total_eval / 2) as isize).unsigned_abs() <= 40);
}

#[test]
fn jsb_batches_are_plus_minus_one() {
    let splits = window_jsb(vec![constant_chorale(13, 39)], 1, 0);
    // Everything landed in the training set; 3 windows of a single chorale.
    assert_eq!(BatchSource::<f64>::len(&splits.train), 3);
    let batch = BatchSource::<f64>::batch(&splits.train, &[1]);
    assert_eq!(batch.inputs.shape(), &[1, 10, KEYS, 1]);
    let Target::Frames(frames) = &batch.target else {
        panic!("expected frames");
    };
    for k in 0..KEYS {
        let want = if k == 39 { 1.0 } else { -1.0 };
        assert_eq!(batch.inputs.at(&[0, 0, k, 0]), want);
        assert_eq!(frames.at(&[0, 0, k, 0]), want);
    }
}

/// One record: label 7, R plane all 10 except R(0,0)=200, G all 20 with
/// G(31,31)=201, B all 30.
fn one_record() -> (Vec<u8>, Vec<u8>) {
    let mut pixels = Vec::new();
    pixels.extend(std::iter::repeat(10u8).take(1024));
    pixels[0] = 200;
    pixels.extend(std::iter::repeat(20u8).take(1024));
    let last = pixels.len() - 1;
    pixels[last] = 201;
    pixels.extend(std::iter::repeat(30u8).take(1024));
    (vec![7u8], pixels)
}

#[test]
fn cifar_record_fixture_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("batch.bin");
    let (labels, pixels) = one_record();
    write_cifar10_file(&path, &labels, &pixels).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 3073);

    let data = load_cifar10_file(&path).unwrap();
    assert_eq!(data.len(), 1);
    assert_eq!(data.label(0), 7);
    // Byte 0 of the pixel block is the red plane's top-left corner.
    assert_eq!(data.pixel(0, 0, 0, 0), 200);
    assert_eq!(data.pixel(0, 1, 31, 31), 201);
    assert_eq!(data.pixel(0, 2, 15, 15), 30);
}

#[test]
fn cifar_source_layout_is_rows_by_columns_by_channels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("batch.bin");
    let (labels, pixels) = one_record();
    write_cifar10_file(&path, &labels, &pixels).unwrap();
    let data = std::sync::Arc::new(load_cifar10_file(&path).unwrap());
    let src = data.source(usize::MAX);
    let batch = BatchSource::<f64>::batch(&src, &[0]);
    assert_eq!(batch.inputs.shape(), &[1, 32, 32, 3]);
    assert_eq!(batch.inputs.at(&[0, 0, 0, 0]), rescale_u8(200));
    assert_eq!(batch.inputs.at(&[0, 0, 0, 1]), rescale_u8(20));
    assert_eq!(batch.inputs.at(&[0, 31, 31, 1]), rescale_u8(201));
    assert_eq!(batch.inputs.at(&[0, 5, 9, 2]), rescale_u8(30));
    let Target::Labels(found) = &batch.target else {
        panic!("expected labels");
    };
    assert_eq!(found, &vec![7]);
}

#[test]
fn cifar_malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_bytes(&dir, "short.bin", &[0u8; 3072]);
    assert!(matches!(
        load_cifar10_file(&path),
        Err(DataError::BadRecordSize { .. })
    ));
    let (_, pixels) = one_record();
    let path = dir.path().join("label.bin");
    write_cifar10_file(&path, &[11], &pixels).unwrap();
    assert!(matches!(
        load_cifar10_file(&path),
        Err(DataError::BadLabel { label: 11, .. })
    ));
}
