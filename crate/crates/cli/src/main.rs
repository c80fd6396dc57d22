mod commands;
mod error;
mod manifest;
mod plot;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser)]
#[command(name = "s2c", version, about = "Learned image codec: train, code, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct ModelArgs {
    /// Trained checkpoint (`.s2ck`)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Named model preset, used untrained when no checkpoint is given
    #[arg(long)]
    preset: Option<String>,
    /// Config file with `preset` and a `[model]` table
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initialization seed for untrained models
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Mse,
    Msssim,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum QualityArg {
    Psnr,
    Msssim,
}

#[derive(Subcommand)]
enum Command {
    /// Rate-distortion training
    Train(TrainArgs),
    /// Code every image of a folder and summarize rate and quality
    Eval(EvalArgs),
    /// Encode an image, or every image of a folder, to `.s2c` files
    Compress(CompressArgs),
    /// Decode a `.s2c` file to PNG
    Decompress(DecompressArgs),
    /// Split forward-pass latency into spatial, channel and other time
    Profile(ProfileArgs),
    /// Effective receptive field of the analysis transform
    Erf(ErfArgs),
    /// Bjøntegaard delta rate between R-D curves
    Bdrate(BdrateArgs),
    /// Plot R-D curves from CSV files
    PlotRd(PlotRdArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Continue from a checkpoint written by an earlier run
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Cosine learning-rate decay instead of a constant rate
    #[arg(long)]
    cosine: bool,
    #[arg(long)]
    no_flips: bool,
    /// Print every n-th step (the first and last are always printed)
    #[arg(long, default_value_t = 10)]
    log_every: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Folder of images
    images: PathBuf,
    /// Curve label in the summary row (defaults to the variant name)
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct CompressArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Image file or folder of images
    input: PathBuf,
    /// Training lambda recorded in the header
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "mse")]
    metric: MetricArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct DecompressArgs {
    #[command(flatten)]
    model: ModelArgs,
    input: PathBuf,
    /// Original image, to report PSNR and MS-SSIM
    #[arg(long)]
    original: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ProfileArgs {
    /// Presets to profile (repeatable); all presets when omitted
    #[arg(long = "preset")]
    presets: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ErfArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Folder of natural images to crop probes from; smooth random probes otherwise
    #[arg(long)]
    probes: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    num_probes: usize,
    /// Probe side length
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    probe_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct BdrateArgs {
    #[arg(long)]
    anchor: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value = "psnr")]
    quality: QualityArg,
    /// Write a CSV table, a figure and a manifest here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PlotRdArgs {
    /// R-D CSV files (`label,bpp,psnr,msssim`)
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "psnr")]
    quality: QualityArg,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = s2cformer::evaluation::latency::device()
        .map_err(CliError::from)
        .and_then(|_| match cli.command {
            Command::Train(a) => commands::train(a),
            Command::Eval(a) => commands::eval(a),
            Command::Compress(a) => commands::compress(a),
            Command::Decompress(a) => commands::decompress(a),
            Command::Profile(a) => commands::profile(a),
            Command::Erf(a) => commands::erf(a),
            Command::Bdrate(a) => commands::bdrate(a),
            Command::PlotRd(a) => commands::plot_rd(a),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
