//! Command-line front end: run calibration experiments from JSON configs,
//! re-render coverage charts from saved tables, and export datasets.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use sureform::config::ExperimentConfig;
use sureform::harness::{self, RunOptions};
use sureform::plot::plot_coverage;

#[derive(Parser)]
#[command(
    name = "sureform",
    version,
    about = "Conformal prediction sets for imaging inverse problems, \
             calibrated with or without ground truth"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config and write its artifacts.
    Run {
        /// Path to the experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Leave-one-out calibration evaluated on the calibration split
        /// instead of a pooled quantile evaluated on fresh test pairs.
        #[arg(long)]
        loo: bool,
    },
    /// Re-render the coverage chart from a previously written coverage.csv.
    Plot {
        /// Path to a coverage.csv produced by `run`.
        #[arg(long)]
        curve: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a config's dataset and write it as flat float image files.
    GenData {
        /// Path to the experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Destination directory (default: <output_dir>/data).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(path)
        .with_context(|| format!("loading config {}", path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, loo } => {
            let config = load_config(&config, seed)?;
            let options = RunOptions { leave_one_out: loo };
            let outputs = harness::run_experiment(&config, &options)?;
            for row in &outputs.curve.rows {
                println!(
                    "alpha={} coverage supervised={:.4} self-supervised={:.4}",
                    row.alpha, row.coverage_supervised, row.coverage_sure
                );
            }
            println!("artifacts written to {}", outputs.output_dir.display());
        }
        Command::Plot { curve, out } => {
            let parsed = harness::read_coverage_csv(&curve)?;
            plot_coverage(&parsed, &out)?;
            println!("chart written to {}", out.display());
        }
        Command::GenData { config, seed, out } => {
            let config = load_config(&config, seed)?;
            let data = harness::prepare_data(&config)?;
            let dir = out.unwrap_or_else(|| config.output_dir.join("data"));
            harness::write_dataset(&data, &dir)?;
            println!(
                "{} truth/measurement pairs written to {}",
                data.truths.len(),
                dir.display()
            );
        }
    }
    Ok(())
}
