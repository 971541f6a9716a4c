//! `qmatch`: train, run, and evaluate the semantic question matching
//! pipeline from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/format error, 4 training
//! failure.

mod commands;
mod config;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ConfigFile;
use qmatch::Error;

#[derive(Parser)]
#[command(
    name = "qmatch",
    version,
    about = "Semantic question matching: encoders, taxonomy, focus rules, baselines, evaluation"
)]
struct Cli {
    /// Flat `key = value` config file with one [section] per subcommand
    /// (default taken from QMATCH_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a question encoder on ranking groups.
    TrainEncoder(commands::train_encoder::Args),
    /// Train a taxonomy classifier head on labeled questions.
    TrainTaxonomy(commands::train_taxonomy::Args),
    /// Extract question words and foci from a CoNLL-U file.
    Focus(commands::focus::Args),
    /// Score question pairs with the full feature pipeline.
    Match(commands::match_cmd::Args),
    /// Rank candidate pools and report retrieval metrics.
    Rank(commands::rank::Args),
    /// Score question pairs with an IR baseline and thresholds.
    Baseline(commands::baseline::Args),
    /// Expand partially ordered groups and train/evaluate the pair ranker.
    Poqr(commands::poqr::Args),
    /// Cluster question representations and report pair recall.
    ClusterEval(commands::cluster_eval::Args),
    /// Verify model gradients against finite differences.
    Gradcheck(commands::gradcheck::Args),
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Training { .. } => 4,
        Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 3,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "usage",
        Error::Training { .. } => "training",
        Error::Format { .. } => "format",
        Error::Io(_) => "io",
        _ => "data",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_secs()
        .init();

    let cli = Cli::parse();
    let file = match ConfigFile::resolve(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: usage: {e}");
            return ExitCode::from(2);
        }
    };

    let result = match cli.command {
        Command::TrainEncoder(args) => commands::train_encoder::run(args, &file),
        Command::TrainTaxonomy(args) => commands::train_taxonomy::run(args, &file),
        Command::Focus(args) => commands::focus::run(args, &file),
        Command::Match(args) => commands::match_cmd::run(args, &file),
        Command::Rank(args) => commands::rank::run(args, &file),
        Command::Baseline(args) => commands::baseline::run(args, &file),
        Command::Poqr(args) => commands::poqr::run(args, &file),
        Command::ClusterEval(args) => commands::cluster_eval::run(args, &file),
        Command::Gradcheck(args) => commands::gradcheck::run(args, &file),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", error_kind(&e));
            ExitCode::from(exit_code_for(&e))
        }
    }
}
