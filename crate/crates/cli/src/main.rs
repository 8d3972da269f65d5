//! amalab: command-line front end for corpus generation, analysis
//! runs, action-budget sweeps and agent comparisons.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, GraphFormat};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "amalab", version, about = "Active-malware-analysis simulation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and write it as one JSON document.
    GenCorpus {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output corpus path.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Analyze every corpus sample; write graphs and step logs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Load this corpus file instead of generating one.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Override the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Macro-F1 versus action budget, one CSV curve per agent.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Optimal action count and simulated seconds per agent.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convert a stored graph JSON document to DOT or normalized JSON.
    ExportGraph {
        /// Graph JSON file, as written by `run`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "dot")]
        format: GraphFormat,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenCorpus { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            commands::gen_corpus(&cfg, &out)
        }
        Command::Run { config, corpus, out_dir, seed } => {
            let cfg = load_config(&config, seed)?;
            commands::run(&cfg, corpus.as_deref(), out_dir.as_deref())
        }
        Command::Sweep { config, corpus, out_dir, seed } => {
            let cfg = load_config(&config, seed)?;
            commands::sweep(&cfg, corpus.as_deref(), out_dir.as_deref())
        }
        Command::Compare { config, corpus, out_dir, seed } => {
            let cfg = load_config(&config, seed)?;
            commands::compare(&cfg, corpus.as_deref(), out_dir.as_deref())
        }
        Command::ExportGraph { input, format, out } => {
            commands::export_graph(&input, format, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
