//! `stforge` command-line entry point.
//!
//! Exit codes: 0 success or accepted, 1 domain failure (check failed, run
//! rejected), 2 usage or configuration error, 3 environment error (missing
//! tool, unreachable backend, unwritable output).

mod cli;
mod commands;
mod operator;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command, DatasetCommand};

/// A failure with its exit code. `Silent` carries an outcome that was
/// already reported on standard output.
#[derive(Debug)]
pub enum Failure {
    Domain(String),
    Usage(String),
    Environment(String),
    Silent(u8),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Environment(_) => 3,
            Failure::Silent(c) => *c,
        }
    }

    fn message(&self) -> Option<&str> {
        match self {
            Failure::Domain(m) | Failure::Usage(m) | Failure::Environment(m) => Some(m),
            Failure::Silent(_) => None,
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn init_logging(quiet: bool, verbose: u8) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).format_target(false).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.quiet, cli.verbose);
    let result = match &cli.command {
        Command::Check(a) => commands::check(&cli, a),
        Command::Dataset(DatasetCommand::Cull(a)) => commands::cull(&cli, a),
        Command::Dataset(DatasetCommand::Split(a)) => commands::split(&cli, a),
        Command::Dataset(DatasetCommand::Derive(a)) => commands::derive(&cli, a),
        Command::Dataset(DatasetCommand::Export(a)) => commands::export(&cli, a),
        Command::Run(a) => commands::run(&cli, a),
        Command::Batch(a) => commands::batch(&cli, a),
        Command::Report(a) => commands::report(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if let Some(m) = f.message() {
                eprintln!("stforge: error: {}", m.replace('\n', " "));
            }
            ExitCode::from(f.code())
        }
    }
}
