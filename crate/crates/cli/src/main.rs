//! `gradgraph`: synthetic data, training, evaluation and analyses from the command line.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

use config::{Command, Settings};

#[derive(Debug, Parser)]
#[command(name = "gradgraph", version, about = "Harmony-optimized compositional triplet embeddings")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Write a synthetic knowledge base as train/valid/test TSV files
    Synth(Settings),
    /// Train a model and write its checkpoint
    Train(Settings),
    /// Filtered Entity Reconstruction metrics on a split
    Eval(Settings),
    /// Score the triplets in a query file
    Score(Settings),
    /// Type- and token-space neighborhoods for queries like `head<TAB>rel<TAB>?tail`
    Neighbors(Settings),
    /// Correlate the Harmony gained by optimization with rank changes
    AnalyzeOpt(Settings),
    /// Known-fact density of type vs token neighborhoods
    Density(Settings),
}

impl CliCommand {
    fn split(self) -> (Command, Settings) {
        match self {
            CliCommand::Synth(s) => (Command::Synth, s),
            CliCommand::Train(s) => (Command::Train, s),
            CliCommand::Eval(s) => (Command::Eval, s),
            CliCommand::Score(s) => (Command::Score, s),
            CliCommand::Neighbors(s) => (Command::Neighbors, s),
            CliCommand::AnalyzeOpt(s) => (Command::AnalyzeOpt, s),
            CliCommand::Density(s) => (Command::Density, s),
        }
    }
}

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let (command, flags) = cli.command.split();
    let cfg = match config::resolve(command, flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match commands::dispatch(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
