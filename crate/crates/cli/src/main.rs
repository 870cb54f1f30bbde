//! `mapuq` command-line workflow.

mod commands;
mod error;
mod files;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "mapuq",
    version,
    about = "MAP reconstruction with automatic regularisation and fast credible-interval maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic test image.
    Phantom(PhantomArgs),
    /// Simulate masked Fourier measurements of an image.
    Simulate(SimulateArgs),
    /// Compute the MAP estimate, optionally selecting mu automatically.
    Reconstruct(ReconstructArgs),
    /// Local credible-interval maps from a MAP estimate.
    Uq(UqArgs),
    /// Px-MALA reference chain and its interval maps.
    Sample(SampleArgs),
    /// Compare MAP-based and chain-based interval lengths.
    Compare(CompareArgs),
    /// Re-run a recorded command and check its outputs bit for bit.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 32)]
    pub rows: usize,
    #[arg(long, default_value_t = 32)]
    pub cols: usize,
    /// point_sources or blobs
    #[arg(long, default_value = "point_sources")]
    pub kind: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Image in UQGRID v1 or 8/16-bit PGM format.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub m_fraction: f64,
    /// Input SNR in dB; sets sigma from the image peak.
    #[arg(long, default_value_t = 30.0)]
    pub snr: f64,
    /// Seed of the mask; the noise uses seed + 1.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sara")]
    pub dict: String,
    /// Wavelet levels; defaults to min(4, largest level the grid allows).
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long, default_value = "analysis")]
    pub prior: String,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Model configuration written by `simulate`.
    #[arg(long)]
    pub model: PathBuf,
    /// db1..db8, dirac or sara; overrides the configuration.
    #[arg(long)]
    pub dict: Option<String>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// analysis or synthesis; overrides the configuration.
    #[arg(long)]
    pub prior: Option<String>,
    /// `auto` or a positive value; overrides the configuration.
    #[arg(long)]
    pub mu: Option<String>,
    /// Ground truth for the reconstruction SNR.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub mu_iters: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct UqArgs {
    /// Model configuration written by `reconstruct`.
    #[arg(long)]
    pub model: PathBuf,
    /// MAP point written by `reconstruct` (image, or coefficients for synthesis).
    #[arg(long)]
    pub point: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Superpixel sizes, comma separated or repeated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10, 15])]
    pub scale: Vec<usize>,
    /// Worker threads for the region fan-out.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Bisection tolerance; defaults to 1e-4 of the MAP dynamic range.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Model configuration written by `reconstruct`.
    #[arg(long)]
    pub model: PathBuf,
    /// Starting point, e.g. the MAP point; defaults to zero.
    #[arg(long)]
    pub start: Option<PathBuf>,
    /// Total iterations including burn-in.
    #[arg(long, default_value_t = 125_000)]
    pub samples: usize,
    /// Defaults to 20% of the iterations.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// `auto` (pilot runs) or a positive step.
    #[arg(long, default_value = "auto")]
    pub step: String,
    /// Moreau-Yosida parameter; defaults to step / 2.
    #[arg(long)]
    pub my_lambda: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub prox_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![10, 15])]
    pub scale: Vec<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Output directory of `uq`.
    #[arg(long)]
    pub map_dir: PathBuf,
    /// Output directory of `sample`.
    #[arg(long)]
    pub chain_dir: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A manifest.json written by any command.
    pub manifest: PathBuf,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::run(cli.command, &argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
