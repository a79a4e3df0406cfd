use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use latentwarn::pipeline::{self, Run};
use latentwarn::PipelineConfig;

/// Latent-manifold early warnings for multichannel time series.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rescale and block-average the input recording.
    Preprocess(Common),
    /// Diffusion-map embedding of the preprocessed data.
    Embed(Common),
    /// Fit the latent SDE to the embedding.
    FitSde(Common),
    /// Indicator series and warning points.
    Indicators(Common),
    /// Project new data onto the stored embedding.
    Extend {
        #[command(flatten)]
        common: Common,
        /// New recording; overrides `extend.path`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Write the synthetic dataset described by the config.
    Synth(Common),
    /// Every stage in order.
    RunAll(Common),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = match &cli.command {
        Command::Preprocess(c)
        | Command::Embed(c)
        | Command::FitSde(c)
        | Command::Indicators(c)
        | Command::Synth(c)
        | Command::RunAll(c)
        | Command::Extend { common: c, .. } => c,
    };
    let config = PipelineConfig::load(&common.config)?;
    let run = Run::new(config, common.seed, common.out.clone())?;
    match &cli.command {
        Command::Preprocess(_) => pipeline::cmd_preprocess(&run),
        Command::Embed(_) => pipeline::cmd_embed(&run),
        Command::FitSde(_) => pipeline::cmd_fit_sde(&run),
        Command::Indicators(_) => pipeline::cmd_indicators(&run).map(|_| ()),
        Command::Extend { input, .. } => pipeline::cmd_extend(&run, input.as_deref()),
        Command::Synth(_) => pipeline::cmd_synth(&run),
        Command::RunAll(_) => pipeline::cmd_run_all(&run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
