//! Scratch probe for the full-width sprite forecaster vs the persistence
//! baseline: per-epoch timing plus held-out mse after each epoch.

#[path = "../tests/common/mod.rs"]
mod common;

use std::ops::ControlFlow;
use tfc::data::{load_npy, window_moving_mnist};
use tfc::model::{build_model, builtin_config};
use tfc::train::{
    evaluate_forecaster, persistence_forecast_mse, train, Adam, BatchSource, TrainMode,
    TrainSettings,
};

fn main() {
    let path = std::path::PathBuf::from("/root/crate/target/acceptance-data/sprites.npy");
    if !path.exists() {
        common::write_moving_sprites(&path, 2500, 40);
    }
    let raw = load_npy(&path).unwrap();
    let (mut train_b, mut val_b, mut test_split) = window_moving_mnist(raw, 1, 0).unwrap();
    train_b.truncate(2000);
    val_b.truncate(16);
    test_split.truncate(200);

    let persist_mse =
        persistence_forecast_mse(&(test_split) as &dyn BatchSource<f32>, 8, 1).unwrap()[0];
    eprintln!("persistence mse on 200 held-out: {persist_mse:.5}");

    let full = builtin_config("tfc-d2", None).unwrap();
    let (mut model_b, _) = build_model::<f32>(&full, 7).unwrap();
    let mut adam_b = Adam::new(5e-4);
    let settings_b = TrainSettings { epochs: 3, batch_size: 8, lr: 5e-4, seed: 7 };
    let mode = TrainMode::Forecast { steps: 1, piano_roll_metric: false };
    train(
        &mut model_b,
        &settings_b,
        mode,
        &train_b,
        &val_b,
        &mut adam_b,
        &mut |m, row, _| {
            let test_mse = evaluate_forecaster(m, &test_split, 8, 1).unwrap()[0];
            eprintln!(
                "epoch {} train {:.5} val {:.5} test {:.5} ({:.0}s)",
                row.epoch, row.train_loss, row.val_loss, test_mse, row.seconds
            );
            ControlFlow::Continue(())
        },
    )
    .unwrap();
}
