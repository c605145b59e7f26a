//! `panokit`: command-line front end for panokit-core.
//!
//! Failures are reported on stderr as one JSON object,
//! `{"error": {"kind": ..., "message": ...}}`, with exit status 1 (runtime)
//! or 2 (usage and configuration).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use config::{CuratorOverrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] panokit_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {reason}")]
    Config { path: String, reason: String },
}

macro_rules! core_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}

core_error_from!(
    panokit_core::io::IoError,
    panokit_core::curator::CuratorError,
    panokit_core::denoise::DenoiseError,
    panokit_core::decode_pad::DecodeError,
    panokit_core::metrics::MetricError,
    panokit_core::noise_field::NoiseError,
    panokit_core::sphere_geom::GeomError,
    panokit_core::tensor::ShapeError
);

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Config { .. } => "config",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "panokit", version, about = "Panoramic video toolkit")]
struct Cli {
    /// Flat TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random draw (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample an i.i.d. Gaussian ERP noise field, optionally latitude-aware.
    SampleNoise {
        #[arg(long)]
        radius: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        latitude_aware: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Row-wise horizontal spectral support of a field.
    AnalyzeSpectrum {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Euler flow-matching sampling with a predictor plugin.
    SimulateDenoise {
        #[arg(long)]
        predictor: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        rotated: bool,
        /// Remap the initial noise with the latitude-aware warp.
        #[arg(long)]
        latitude_aware_init: bool,
        /// Temporal chunk length for windowed sampling.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, requires = "window")]
        overlap: Option<usize>,
        /// Binary mask tensor; 1 marks elements to generate.
        #[arg(long, requires = "reference", conflicts_with = "window")]
        mask: Option<PathBuf>,
        #[arg(long, requires = "mask")]
        reference: Option<PathBuf>,
        /// Endpoint tensor for the constant-target predictor.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Text conditioning handed to the predictor.
        #[arg(long)]
        prompt: Option<String>,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decode a latent to a PNG frame sequence with circular padding.
    Decode {
        #[arg(long)]
        decoder: Option<String>,
        #[arg(long)]
        pad_r: Option<usize>,
        #[arg(long)]
        upsample: Option<usize>,
        #[arg(short, long)]
        input: PathBuf,
        /// Output directory for frame_NNNNNN.png files.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score a PNG frame sequence.
    Score {
        /// end-continuity or cubemap:<face-metric>
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        face_size: Option<usize>,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Filter clip records through the curation stages.
    Curate {
        #[command(flatten)]
        thresholds: CuratorOverrides,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        rejects: PathBuf,
        #[arg(long)]
        audit: PathBuf,
    },
    /// Accumulated per-column seam error over a sampling run.
    SeamErrorSim {
        #[arg(long = "T")]
        steps: usize,
        #[arg(long = "W")]
        width: usize,
        #[arg(long)]
        rotated: bool,
        /// seam-impulse or uniform:<level>
        #[arg(long, default_value = "seam-impulse")]
        model: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// List registered predictor and decoder plugins.
    Plugins,
}

fn init_runtime() -> Result<(), CliError> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PANOKIT_LOG", "warn"))
        .format_timestamp(None)
        .init();
    if let Ok(raw) = std::env::var("PANOKIT_THREADS") {
        let n: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Usage(format!("PANOKIT_THREADS={raw} is not a positive integer"))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_runtime()?;
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    log::debug!("root seed {seed}");
    commands::dispatch(cli.command, &file, seed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_error(&CliError::Usage(e.render().to_string())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &CliError) -> ExitCode {
    let doc = serde_json::json!({
        "error": { "kind": e.kind(), "message": e.to_string().trim_end() }
    });
    eprintln!("{doc}");
    ExitCode::from(e.exit_code())
}
