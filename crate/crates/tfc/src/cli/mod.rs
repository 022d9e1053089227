//! Command-line entry points. Every command returns a process exit code:
//! 0 ok, 1 check failure, 2 config error, 3 data error, 4 divergence,
//! 5 checkpoint digest mismatch.

mod commands;
pub mod gradsystems;

pub use commands::{cmd_eval, cmd_forecast, cmd_gradcheck, cmd_params, cmd_train, shrink_for_gradcheck, PUBLISHED_COUNTS};

use clap::{Parser, Subcommand};
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_DIGEST: i32 = 5;

#[derive(Parser)]
#[command(name = "tfc", about = "Temporally folded convolutional forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a model from a config file; writes checkpoints and metrics CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on the task's test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluate the full evaluation corpus rather than the test half.
        #[arg(long)]
        full_test: bool,
        /// Also print the copy-last-frame baseline under the same metrics.
        #[arg(long)]
        persistence: bool,
    },
    /// Forecast from a test-set window and dump PGM frames.
    Forecast {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test-set window index.
        #[arg(long)]
        index: usize,
        /// Forecast steps.
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient verification (always 64-bit).
    Gradcheck {
        /// Built-in model to check end to end (reduced widths).
        #[arg(long)]
        model: Option<String>,
        /// Single layer kind to check; see `--layer help`.
        #[arg(long)]
        layer: Option<String>,
        /// Shrink the model further for a fast smoke check.
        #[arg(long)]
        tiny: bool,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, default_value_t = 10)]
        probes: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Parameter-count table with deviations from published totals.
    Params {
        /// Built-in name; omit for all built-ins.
        #[arg(long)]
        model: Option<String>,
    },
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Train { config, seed } => cmd_train(&config, seed),
        Command::Eval {
            config,
            checkpoint,
            full_test,
            persistence,
        } => cmd_eval(&config, &checkpoint, full_test, persistence),
        Command::Forecast {
            config,
            checkpoint,
            index,
            k,
            out,
        } => cmd_forecast(&config, &checkpoint, index, k, &out),
        Command::Gradcheck {
            model,
            layer,
            tiny,
            tolerance,
            probes,
            seed,
        } => cmd_gradcheck(model.as_deref(), layer.as_deref(), tiny, tolerance, probes, seed),
        Command::Params { model } => cmd_params(model.as_deref()),
    }
}
