//! `zsc`: command-line driver for the zero-shot cost estimation pipeline.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use zsc_core::encoding::CardMode;

#[derive(Debug, Parser)]
#[command(name = "zsc", version, about = "Zero-shot learned query cost estimation")]
pub struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic database and its catalog.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Generate a random query workload for a database.
    GenWorkload {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plan and execute a workload, writing executed samples.
    RunWorkload {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Indexes to build before executing.
        #[arg(long)]
        indexes: Option<PathBuf>,
        /// Cost weights config.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Also record wall-clock time per query (not deterministic).
        #[arg(long)]
        wall_clock: bool,
    },
    /// Train a zero-shot model on samples from several databases.
    Train {
        #[arg(long, num_args = 1.., required = true)]
        samples: Vec<PathBuf>,
        /// Database that must not contribute training samples.
        #[arg(long)]
        holdout: String,
        /// Database whose samples are used for early stopping.
        #[arg(long)]
        validation: Option<String>,
        #[arg(long)]
        model_config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = CardMode::Exact)]
        card_mode: CardMode,
    },
    /// Continue training a model on a few target-database samples.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = CardMode::Exact)]
        card_mode: CardMode,
    },
    /// Predict the cost of the queries in a workload file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        query: PathBuf,
        /// Predict as if an index on `table.column` existed.
        #[arg(long)]
        hypothetical_index: Option<String>,
        #[arg(long, default_value_t = CardMode::Estimated)]
        card_mode: CardMode,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Q-error metrics of a model on a sample file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = CardMode::Exact)]
        card_mode: CardMode,
    },
    /// Run a leave-one-database-out experiment.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        index_mode: bool,
    },
}

fn init_logging() {
    let level = std::env::var("ZSC_LOG").unwrap_or_else(|_| "error".into());
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    init_logging();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().expect("thread pool is configured once");
    }
    let args: Vec<String> = std::env::args().skip(1).collect();
    match commands::run(cli.command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
