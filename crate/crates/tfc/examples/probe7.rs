//! Scratch probe for the image-classifier setup: timing and accuracy per epoch.

#[path = "../tests/common/mod.rs"]
mod common;

use std::ops::ControlFlow;
use tfc::config::scale_features;
use tfc::data::load_cifar10_dir;
use tfc::model::{build_model, builtin_config};
use tfc::train::{evaluate_classifier, train, Adam, TrainMode, TrainSettings};

fn main() {
    let scale: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let dir = std::path::PathBuf::from("/root/crate/target/acceptance-data/images");
    if !dir.join("test_batch.bin").exists() {
        common::write_image_batches(&dir, 10_000, 1_000, 21);
    }
    let (train_set, test_set) = load_cifar10_dir(&dir).unwrap();
    let (train_set, test_set) = (std::sync::Arc::new(train_set), std::sync::Arc::new(test_set));
    let train_src = train_set.source(10_000);
    let val_src = test_set.source(200);
    let test_src = test_set.source(usize::MAX);

    let mut cfg = builtin_config("tfc-d1-cifar", None).unwrap();
    scale_features(&mut cfg, scale);
    let (mut model, _) = build_model::<f32>(&cfg, 7).unwrap();
    let mut adam = Adam::new(5e-4);
    let settings = TrainSettings { epochs: 10, batch_size: 50, lr: 5e-4, seed: 7 };
    train(
        &mut model,
        &settings,
        TrainMode::Classify,
        &train_src,
        &val_src,
        &mut adam,
        &mut |_, row, _| {
            eprintln!(
                "scale {} epoch {} train {:.4} val acc {:.4} ({:.0}s)",
                scale, row.epoch, row.train_loss, row.metric, row.seconds
            );
            if row.metric >= 0.55 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    )
    .unwrap();
    let (_, acc) = evaluate_classifier(&mut model, &test_src, 50).unwrap();
    eprintln!("final test acc {acc:.4}");
}
