mod commands;
mod dataset;
mod error;
mod manifest;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "sftformer", version = manifest::version(), about = "Radar-echo nowcasting: data synthesis, training, evaluation and prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic echo sequences as containers.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        count: usize,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Model config the frame size must be compatible with.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a directory of containers.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Reconstruction-loss weight.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint and the persistence baseline.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Config whose architecture must match the checkpoint's.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Rain-rate thresholds in mm/h, comma separated.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        /// Pixel thresholds in [0, 1], comma separated.
        #[arg(long, value_delimiter = ',')]
        pixel_thresholds: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast one sequence and render a frame grid.
    Predict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient verification in 64-bit.
    Gradcheck {
        /// One of swin_block, feb_forward, sft_block_forward, forecast_decode, reconstruct_odd.
        #[arg(long)]
        select: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampled coordinates per tensor.
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            seed,
            count,
            frames,
            size,
            config,
            out,
        } => commands::synth(seed, count, frames, size, config.as_deref(), &out),
        Command::Train {
            data,
            config,
            resume,
            steps,
            seed,
            lambda,
            out,
        } => commands::train(commands::TrainArgs {
            data,
            config,
            resume,
            steps,
            seed,
            lambda,
            out,
        }),
        Command::Eval {
            data,
            checkpoint,
            config,
            thresholds,
            pixel_thresholds,
            out,
        } => commands::eval(&data, &checkpoint, config.as_deref(), thresholds, pixel_thresholds, &out),
        Command::Predict { input, checkpoint, out } => commands::predict(&input, &checkpoint, &out),
        Command::Gradcheck {
            select,
            seed,
            samples,
            out,
        } => commands::gradcheck(&select, seed, samples, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
