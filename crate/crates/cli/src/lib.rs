//! Batch front end: stills, orbits and parameter sweeps, style transfer on
//! scene files, snow preprocessing and timing benchmarks.

pub mod commands;
pub mod job;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::job::JobArgs;

#[derive(Debug, Parser)]
#[command(name = "splatclimate", version, about)]
pub struct Cli {
    /// TOML file with defaults for any option; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render every pose (and sweep value) to PNG files and report timings.
    Render(JobArgs),
    /// Apply a color transform, given or estimated from a style image, to a scene file.
    Style(JobArgs),
    /// Place snow on a scene and write the snow Gaussians.
    SnowPrep(JobArgs),
    /// Median per-pass timings over repeated renders.
    Bench(JobArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    let file = cli.config.as_deref().map(JobArgs::from_file).transpose()?.unwrap_or_default();
    match cli.command {
        Command::Render(a) => commands::render::run(&a.or(file)),
        Command::Style(a) => commands::style::run(&a.or(file)),
        Command::SnowPrep(a) => commands::snow::run(&a.or(file)),
        Command::Bench(a) => commands::bench::run(&a.or(file)),
    }
}
