//! The `ltcnn` command line: train, evaluate, predict, explain, inspect,
//! split and augment.

pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use config::{DataSection, NetworkSection, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "LTCNN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ltcnn", version, about = "Lightweight CNN toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a class-labeled directory.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify one image.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Write a gradient saliency map for one image as PGM.
    Saliency {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Class name or index; defaults to the predicted class.
        #[arg(long = "class")]
        class: Option<String>,
        /// Also dump the raw float map as an LTT1 tensor.
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Print the parameter table and model size.
    Inspect {
        #[arg(
            long,
            conflicts_with = "checkpoint",
            required_unless_present = "checkpoint"
        )]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Materialize a stratified train/test split by copying files.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write originals plus one augmented copy per op.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "rotate,flip,shear")]
        ops: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Exit code for a failed command: divergence maps to 3, everything else
/// (configuration, data, format and I/O problems) to 2.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let diverged = err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<ltcnn::Error>(),
            Some(ltcnn::Error::Divergence { .. })
        )
    });
    if diverged {
        EXIT_DIVERGENCE
    } else {
        EXIT_USAGE
    }
}

/// Sizes the global rayon pool from `LTCNN_THREADS` when it is set.
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            anyhow::anyhow!("{THREADS_ENV} must be a positive integer, got {value:?}")
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow::anyhow!("cannot configure {threads} worker threads: {e}"))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Train { config } => commands::train(&config),
        Command::Eval {
            checkpoint,
            data,
            batch,
            out,
        } => commands::eval(&checkpoint, &data, batch, &out),
        Command::Predict { checkpoint, image } => commands::predict(&checkpoint, &image),
        Command::Saliency {
            checkpoint,
            image,
            out,
            class,
            raw,
        } => commands::saliency(&checkpoint, &image, &out, class.as_deref(), raw.as_deref()),
        Command::Inspect { config, checkpoint } => {
            commands::inspect(config.as_deref(), checkpoint.as_deref())
        }
        Command::Split {
            data,
            ratio,
            seed,
            out,
        } => commands::split(&data, ratio, seed, &out),
        Command::Augment {
            data,
            out,
            ops,
            seed,
        } => commands::augment(&data, &out, &ops, seed),
    }
}

pub fn main_with_args(args: impl IntoIterator<Item = String>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
