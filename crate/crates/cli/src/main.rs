//! `fdd`: synthesize data, train and sample generators, extract features,
//! train and evaluate pipelines, and run experiment grids and ablations.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fdd", version, about = "Imbalanced and noisy bearing fault diagnosis workbench")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Experiment configuration (JSON); defaults apply to omitted fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
}

/// Which scenario cell to materialize.
#[derive(Debug, Clone, Args)]
pub struct CellArgs {
    /// Minority share in percent; defaults to the first configured α.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// SNR in dB; defaults to the first configured level.
    #[arg(long)]
    pub snr: Option<f64>,
    /// Leave the bursts noise-free.
    #[arg(long, conflicts_with = "snr")]
    pub clean: bool,
    #[arg(long, default_value_t = 0)]
    pub repetition: usize,
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Materialize one scenario and write it as an FDDB dataset.
    Synth {
        #[command(flatten)]
        cell: CellArgs,
        /// Write only this split of the fold's partition (train, val or test).
        #[arg(long)]
        split: Option<String>,
    },
    /// Train a WGAN-GP generator for one class.
    GanTrain {
        /// Class to model.
        #[arg(long, default_value = "out3")]
        class: String,
        /// FDDB file with the training bursts; without it the configured
        /// scenario's training split is used.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        cell: CellArgs,
    },
    /// Draw bursts from a trained generator into an FDDB file.
    GanSample {
        #[arg(long)]
        generator: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Compute standardized FFT+CWT tensors for an FDDB file.
    Features {
        #[arg(long)]
        data: PathBuf,
    },
    /// Fit the full pipeline on one scenario cell's training split.
    Train {
        #[command(flatten)]
        cell: CellArgs,
    },
    /// Score a trained pipeline on an FDDB file. Without `--config`, the
    /// `config.json` written next to the model by `train` is used.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run every grid point × repetition × fold.
    Grid {
        /// Ignore cached run records.
        #[arg(long)]
        no_cache: bool,
    },
    /// Paired comparison of two settings.
    Ablate {
        /// Run the grid with this toggle on (variant) and off (baseline).
        #[arg(long, required_unless_present = "base", conflicts_with_all = ["base", "variant"])]
        toggle: Option<String>,
        /// Output directory of a finished baseline grid.
        #[arg(long, requires = "variant")]
        base: Option<PathBuf>,
        /// Output directory of a finished variant grid.
        #[arg(long, requires = "base")]
        variant: Option<PathBuf>,
    },
    /// Rebuild the grid tables and summary from cached run records.
    Report,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
