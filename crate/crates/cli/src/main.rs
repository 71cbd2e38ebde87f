use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xprobe::imaging::BaselineStyle;

mod commands;
mod config;
mod context;
mod dataset;
mod error;
mod models;
mod output;

use config::{GridConfig, Overrides, RunConfig};
use context::Context;
use error::CliError;

/// Dataset-wide explanation statistics for image classifiers.
#[derive(Parser)]
#[command(name = "xprobe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find minimal sufficient explanations for every model and image.
    Mse(Common),
    /// Count sub-explanations below each explanation found by `mse`.
    Subexp(Common),
    /// Score each model's own attribution maps with insertion and deletion.
    Saliency(Common),
    /// Score every model on every other model's maps and embed the results.
    Crosstest(Common),
    /// Summarise the files written by the other commands.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// `grey`, `blur` or `blur:<sigma>`.
    #[arg(long)]
    baseline: Option<BaselineStyle>,
    #[arg(long)]
    beam_width: Option<usize>,
    /// Sufficiency fraction of the full-image confidence.
    #[arg(long)]
    p_h: Option<f64>,
    /// Patch grid as `RxC`.
    #[arg(long)]
    grid: Option<GridConfig>,
    /// Perturbation curve steps.
    #[arg(long)]
    steps: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let overrides = Overrides {
            out: self.out.clone(),
            seed: self.seed,
            jobs: self.jobs,
            baseline: self.baseline,
            beam_width: self.beam_width,
            p_h: self.p_h,
            grid: self.grid,
            steps: self.steps,
        };
        RunConfig::load(&self.config, &overrides)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mse(c) => commands::mse::run(&Context::new(c.load()?)?),
        Command::Subexp(c) => commands::subexp::run(&Context::new(c.load()?)?),
        Command::Saliency(c) => commands::saliency::run(&Context::new(c.load()?)?),
        Command::Crosstest(c) => commands::crosstest::run(&Context::new(c.load()?)?),
        Command::Report(c) => commands::report::run(&c.load()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xprobe: {e}");
            e.exit_code()
        }
    }
}
