//! Command-line front end: one subcommand per pipeline stage plus
//! `run-all`. Stages communicate through files in the output directory.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod context;
pub mod stages;

pub use context::{CliError, Context};

pub const MANIFEST_ENV: &str = "DEPTHSIM_MANIFEST";

#[derive(Debug, Parser)]
#[command(name = "depthsim", version, about = "Human-likeness analysis of monocular depth estimates")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Run manifest (JSON).
    #[arg(long, global = true, env = MANIFEST_ENV)]
    pub manifest: Option<PathBuf>,
    /// Master seed; overrides the manifest.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Bootstrap iterations; overrides the manifest.
    #[arg(long = "B", global = true)]
    pub iterations: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub track: Option<TrackSel>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory; overrides the manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrackSel {
    Absolute,
    ScaleRecovered,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample evaluation points from the manifest's scenes.
    SamplePoints,
    /// Score observer reliability and apply the outlier cutoff.
    Screen,
    /// Align model outputs to metric depth and report RMSE.
    RecoverScale,
    /// Half-split human–human and human–model similarity.
    Similarity,
    /// Per-image affine decomposition and component similarity.
    Affine,
    /// Accuracy versus human-likeness report.
    Tradeoff {
        /// Also write tradeoff.json.
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic dataset and manifest.
    Synth {
        /// SynthSpec JSON; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        observers_per_scene: Option<usize>,
        #[arg(long)]
        outlier_fraction: Option<f64>,
    },
    /// All stages in order.
    RunAll {
        #[arg(long)]
        json: bool,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Synth {
        spec,
        scenes,
        observers_per_scene,
        outlier_fraction,
    } = &cli.command
    {
        return stages::synth(
            &cli.global,
            spec.as_deref(),
            *scenes,
            *observers_per_scene,
            *outlier_fraction,
        );
    }
    let ctx = Context::from_opts(&cli.global)?;
    ctx.with_pool(|| match cli.command {
        Command::SamplePoints => stages::sample_points(&ctx),
        Command::Screen => stages::screen(&ctx),
        Command::RecoverScale => stages::recover_scale(&ctx),
        Command::Similarity => stages::similarity(&ctx),
        Command::Affine => stages::affine(&ctx),
        Command::Tradeoff { json } => stages::tradeoff(&ctx, json),
        Command::RunAll { json } => stages::run_all(&ctx, json),
        Command::Synth { .. } => unreachable!(),
    })
}

/// Parses `args`, runs, and reports failures as one
/// `error[Class]: message` line on stderr.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error[Usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.class(), e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
