//! `cpikit` — the command-line pipeline: monthly CPI model estimation,
//! holiday-window/order selection, outlier scanning, backtesting,
//! seasonal adjustment, and diffusion-index forecasting, driven by a
//! single JSON configuration.

mod config;
mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use cpikit::error::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cpikit",
    version,
    about = "Monthly CPI modeling and forecasting pipeline"
)]
struct Cli {
    /// Pipeline configuration (JSON); relative data paths resolve
    /// against its directory.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,

    /// Artifact directory, overriding the config's out_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker-pool size, overriding the config's threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed override for estimation restarts.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Re-estimate only every 6th backtest origin (refit stride 6).
    #[arg(long, global = true)]
    fast: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the configured model on the target series.
    Fit,
    /// Run the three-criterion order x holiday-window search.
    Grid,
    /// Scan the configured model for outliers and build the per-month census.
    Outliers,
    /// Report the estimated holiday effect and its regressors.
    SfEffects,
    /// Evaluate the configured engine out of sample.
    Backtest,
    /// Seasonally adjust the target series.
    Seasadj,
    /// Diffusion-index forecasts from the covariate panel.
    DiForecast,
    /// RMSE ratios between the two engines' backtest summaries.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let (mut config, dir) = config::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.fast {
        config.refit_stride = 6;
    }
    if let Some(threads) = cli.threads {
        config.threads = Some(threads);
    }
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParam(format!("worker pool: {e}")))?;
    }

    let ctx = pipeline::Context::new(config, dir, cli.out)?;
    match cli.command {
        Command::Fit => pipeline::cmd_fit(&ctx),
        Command::Grid => pipeline::cmd_grid(&ctx),
        Command::Outliers => pipeline::cmd_outliers(&ctx),
        Command::SfEffects => pipeline::cmd_sf_effects(&ctx),
        Command::Backtest => pipeline::cmd_backtest(&ctx),
        Command::Seasadj => pipeline::cmd_seasadj(&ctx),
        Command::DiForecast => pipeline::cmd_di_forecast(&ctx),
        Command::Report => pipeline::cmd_report(&ctx),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        // 1 signals bad input data or configuration, 2 a numerical
        // failure inside the estimation pipeline.
        std::process::exit(if e.is_data_error() { 1 } else { 2 });
    }
}
