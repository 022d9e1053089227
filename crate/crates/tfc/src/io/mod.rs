//! On-disk artifacts: checkpoints, PGM frame dumps, and metrics CSV rows.

mod checkpoint;
mod pgm;

pub use checkpoint::{
    config_digest, load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use pgm::{frame_to_pgm, write_pgm};

/// Header of the per-epoch metrics CSV.
pub const METRICS_HEADER: &str = "epoch,train_loss,val_loss,metric,seconds";

/// One CSV row under [`METRICS_HEADER`].
pub fn metrics_row(row: &crate::train::EpochRow) -> String {
    format!(
        "{},{},{},{},{:.3}",
        row.epoch, row.train_loss, row.val_loss, row.metric, row.seconds
    )
}
