//! `openworld` — generate two-domain benchmark data, pretrain the
//! embedding model, run the open-world recognition stream, and render
//! metric reports.
//!
//! Exit codes: 0 success, 2 configuration error (bad flags, bad config
//! file), 3 runtime error (missing files, diverged training, ...).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use openworld::commands::{cmd_gen_data, cmd_report, cmd_stream, cmd_train};
use openworld::config::RunConfig;
use openworld::Error;

#[derive(Parser)]
#[command(name = "openworld", version, about = "Open-world recognition over shifting domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate source and target datasets (with manifests) per the config.
    GenData {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
    },
    /// Pretrain the embedding model and bootstrap the evaluators.
    Train {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for snapshots and the loss log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the open-world query stream over the target domain.
    Stream {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Directory holding the snapshots written by `train`.
        #[arg(long)]
        snapshots: PathBuf,
        /// Output directory for outcome and metrics logs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render every metrics CSV in a directory to SVG plus one summary JSON.
    Report {
        /// Directory containing metrics CSV files.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory for charts and the summary.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Error> {
    match cli.command {
        Command::GenData { config } => cmd_gen_data(&RunConfig::load(&config)?),
        Command::Train { config, out } => Ok(cmd_train(&RunConfig::load(&config)?, &out)?.paths),
        Command::Stream { config, snapshots, out } => {
            Ok(cmd_stream(&RunConfig::load(&config)?, &snapshots, &out)?.paths)
        }
        Command::Report { input, out } => cmd_report(&input, &out),
    }
}

fn main() -> ExitCode {
    // clap exits with code 2 on usage errors, matching the config-error
    // contract for bad invocations.
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for path in paths {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_config() { 2 } else { 3 })
        }
    }
}
