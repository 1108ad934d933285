mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use hip::HipError;

use crate::args::{Cli, Command};

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Numerical(m) => write!(f, "numerical: {m}"),
        }
    }
}

impl From<HipError> for CliError {
    fn from(e: HipError) -> Self {
        match e {
            HipError::Config(_) => CliError::Usage(e.to_string()),
            HipError::Numerical(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let command = cli.command.name();
    let result = (|| {
        let file = match &cli.config {
            Some(path) => Some(manifest::read_config(path, command)?),
            None => None,
        };
        let jobs = cli.jobs.unwrap_or(1).max(1);
        match &cli.command {
            Command::Simulate(a) => commands::simulate(a, file, jobs),
            Command::Fit(a) => commands::fit(a, file, jobs),
            Command::Tune(a) => commands::tune(a, file, jobs),
            Command::Predict(a) => commands::predict(a, file, jobs),
            Command::Evaluate(a) => commands::evaluate(a, file, jobs),
            Command::Scree(a) => commands::scree(a, file, jobs),
            Command::Experiment(a) => commands::experiment(a, file, jobs),
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hip {command}: {e}");
            ExitCode::from(e.code())
        }
    }
}
