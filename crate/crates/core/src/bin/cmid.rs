use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use cmid::runner::{self, RunManifest, RunOptions};

/// Seeded experiment runner: data generation, training, evaluation, theory checks and sweeps.
#[derive(Parser)]
#[command(name = "cmid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Added to every seed in the config.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured datasets as CSV plus JSON sidecars.
    Gen,
    /// Train one run per seed and write logs, checkpoints and a summary.
    Train,
    /// Evaluate trained checkpoints.
    Eval,
    /// Closed-form versus oracle verification, figure tables, or the toy enumeration.
    Theory,
    /// Train every cell of the config's hyperparameter grid.
    Sweep {
        /// Cells trained concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
}

fn run(cli: Cli) -> anyhow::Result<RunManifest> {
    let config = cli.config.context("--config is required")?;
    let parallel = match cli.command {
        Command::Sweep { parallel } => parallel,
        _ => 1,
    };
    let opts = RunOptions { out: cli.out, seed_offset: cli.seed_offset, parallel };
    let (cfg, out) = runner::prepare(&config, &opts)?;
    let manifest = match cli.command {
        Command::Gen => runner::cmd_gen(&cfg, &out)?,
        Command::Train => runner::cmd_train(&cfg, &out)?,
        Command::Eval => runner::cmd_eval(&cfg, &out)?,
        Command::Theory => runner::cmd_theory(&cfg, &out)?,
        Command::Sweep { parallel } => runner::cmd_sweep(&cfg, &out, parallel)?,
    };
    Ok(manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(m) => {
            for note in &m.notes {
                println!("{note}");
            }
            for s in &m.summary {
                let cells: Vec<String> = s.metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
                println!("seed {}: {}", s.seed, cells.join(" "));
            }
            println!("{} files written, manifest_{}.json", m.files.len(), m.command);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<cmid::Error>().map_or(2, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
