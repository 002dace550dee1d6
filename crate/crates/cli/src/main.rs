//! `sketch-optim` binary: `train`, `sketch-bench` and `powerlaw`
//! subcommands. Exit codes: 0 success, 2 configuration error (including
//! missing run artifacts), 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sketch_optim_cli::{run_powerlaw, run_sketch_bench, run_train, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "sketch-optim", version, about = "Sketch-compressed optimizer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the synthetic task per the config and write metrics.
    Train {
        /// Path to the TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics and artifacts.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Measure sketch error-bound violation rates against an exact vector.
    SketchBench {
        /// Path to the TOML run configuration (needs a [bench] section).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for bench.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Re-emit midpoint and top-k drift series from a run's snapshots.
    Powerlaw {
        /// Directory holding a completed run's snapshots.bin.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn load(config: &Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let summary = run_train(&cfg, &out)?;
            println!(
                "train: {} steps, optimizer {} ({:?} mode), memory ratio {:.3}",
                summary.steps,
                cfg.optimizer.kind.name(),
                cfg.optimizer.mode,
                summary.memory_ratio
            );
            if let Some(loss) = summary.final_full_loss {
                println!("train: final full-dataset loss {:.6}", loss);
            }
            if let Some(mid) = summary.mean_midpoint {
                println!("train: mean auxiliary midpoint {:.4}", mid);
            }
            println!("train: metrics written to {}", out.join("metrics.csv").display());
            Ok(())
        }
        Command::SketchBench { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let summary = run_sketch_bench(&cfg, &out)?;
            println!(
                "sketch-bench: signed-median rate {:.5}, min rate {:.5}, underestimates {} over {} components",
                summary.signed_rate,
                summary.min_rate,
                summary.underestimates,
                summary.components_checked
            );
            println!("sketch-bench: results written to {}", out.join("bench.csv").display());
            Ok(())
        }
        Command::Powerlaw { out } => {
            let summary = run_powerlaw(&out)?;
            for (tag, mid) in &summary.mean_midpoints {
                println!("powerlaw: {} moment mean midpoint {:.4}", tag.name(), mid);
            }
            println!(
                "powerlaw: {} snapshots -> {}",
                summary.records,
                out.join("powerlaw.csv").display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code())
        }
    }
}
