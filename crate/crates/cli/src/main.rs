//! `ggen` command line: train a model, evaluate a checkpoint, run the
//! ablation grid, or inspect a checkpoint header.
//!
//! Exit codes: 0 success, 1 runtime failure (training/eval aborted),
//! 2 usage or config error. `GGEN_SEED` overrides the config seed.

use clap::{Parser, Subcommand};
use ggen::config::TrainMode;
use ggen::driver::{self, EvalOptions};
use ggen::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ggen", version, about = "Geometry-aware conditional generator training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a TOML config; writes model.ckpt, metrics.csv
    /// and manifest.json into the output directory.
    Train {
        /// Path to the run config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the run artifacts.
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        /// Override the config's training mode (geo | baseline).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Evaluate a checkpoint with a named experiment
    /// (median | geodesic-sweep | interp | coverage | ablate).
    Eval {
        /// Path to model.ckpt.
        checkpoint: PathBuf,
        /// Experiment name.
        experiment: String,
        /// Output directory for reports.
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        /// Random directions per sweep target.
        #[arg(long, default_value_t = 10)]
        directions: usize,
        /// Random interpolations to aggregate.
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        /// Interpolation discretization steps.
        #[arg(long, default_value_t = 30)]
        steps: usize,
        /// Generated samples per condition for coverage.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Optimizer steps for the regression convergence check.
        #[arg(long, default_value_t = 4000)]
        budget: usize,
        /// Evaluation seed.
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Train and evaluate every cell of the ablation grid.
    Ablate {
        /// Path to the base run config.
        #[arg(long)]
        config: PathBuf,
        /// Axes to sweep (lh_variant, projection, dim_z, loss_combo);
        /// all four when omitted.
        #[arg(long)]
        axes: Vec<String>,
        /// Output directory for ablation.csv.
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        /// Worker threads for the fan-out.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print a checkpoint's header.
    Inspect {
        /// Path to model.ckpt.
        checkpoint: PathBuf,
    },
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn run(cli: Cli) -> ggen::Result<ExitCode> {
    match cli.command {
        Command::Train { config, out, mode } => {
            let mode = mode.map(|m| TrainMode::parse(&m)).transpose()?;
            let artifacts = driver::cmd_train(&config, &out, mode)?;
            match artifacts.aborted {
                None => {
                    println!(
                        "run complete: {} | {} | {}",
                        artifacts.checkpoint.display(),
                        artifacts.metrics.display(),
                        artifacts.manifest.display()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Some(reason) => {
                    eprintln!(
                        "training aborted ({reason}); last valid state saved to {}",
                        artifacts.checkpoint.display()
                    );
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Eval {
            checkpoint,
            experiment,
            out,
            directions,
            pairs,
            steps,
            samples,
            budget,
            seed,
        } => {
            let opts = EvalOptions { directions, pairs, steps, samples, budget, seed };
            let artifacts = driver::cmd_eval(&checkpoint, &experiment, &out, &opts)?;
            for f in &artifacts.files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate { config, axes, out, jobs } => {
            let path = driver::cmd_ablate(&config, &axes, &out, jobs.max(1))?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { checkpoint } => {
            print!("{}", driver::cmd_inspect(&checkpoint)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
