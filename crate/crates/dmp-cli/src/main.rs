//! `dmp` — propagate sparse labels through a video, score predictions, and
//! sweep the memory-admission parameters.
//!
//! Exit codes: 0 on success, 2 when inputs or configuration are invalid,
//! 3 on I/O or file-format failures.

mod evaluate;
mod run;
mod sequence;
mod sweep;

use clap::{Parser, Subcommand};
use dmp_core::config::{load_config, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dmp",
    about = "Dual-memory video label propagation",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the seed labels through a sequence directory.
    Run {
        /// Sequence directory (frames/, masks/ or keypoints.txt, features/).
        #[arg(long)]
        sequence: PathBuf,
        /// Engine configuration file (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for predictions, report.txt, and dumps.
        #[arg(long)]
        out: PathBuf,
        /// Also write blended mask overlays.
        #[arg(long)]
        overlays: bool,
        /// Also write memory.txt with admissions and final bank contents.
        #[arg(long)]
        dump_memory: bool,
        /// Also write clusters.txt with per-frame cluster counts.
        #[arg(long)]
        dump_clusters: bool,
    },
    /// Score existing predictions against ground truth.
    Eval {
        /// Directory holding predictions.
        #[arg(long)]
        pred: PathBuf,
        /// Directory holding ground truth.
        #[arg(long)]
        truth: PathBuf,
        /// Label mode of both directories.
        #[arg(long, value_enum)]
        mode: evaluate::EvalMode,
    },
    /// Re-run the pipeline over a parameter grid and write a CSV.
    Sweep {
        /// Sequence directory (mask mode).
        #[arg(long)]
        sequence: PathBuf,
        /// Engine configuration file; the swept key overrides per cell.
        #[arg(long)]
        config: PathBuf,
        /// Which parameter grid to sweep.
        #[arg(long, value_enum)]
        param: sweep::SweepParam,
        /// CSV path to write.
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(command: Command) -> dmp_core::Result<()> {
    match command {
        Command::Run {
            sequence,
            config,
            out,
            overlays,
            dump_memory,
            dump_clusters,
        } => {
            let config: RunConfig = load_config(&config)?;
            let artifacts = run::run_command(
                &sequence,
                &config,
                &out,
                overlays,
                dump_memory,
                dump_clusters,
            )?;
            print!("{}", artifacts.report.render());
        }
        Command::Eval { pred, truth, mode } => {
            let report = evaluate::eval_command(&pred, &truth, mode)?;
            print!("{}", report.render());
        }
        Command::Sweep {
            sequence,
            config,
            param,
            out,
        } => {
            let config = load_config(&config)?;
            let cells = sweep::sweep_command(&sequence, &config, param, &out)?;
            let completed = cells.iter().filter(|c| c.metrics.is_some()).count();
            println!("sweep wrote {} cells ({completed} ok) to {}", cells.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
