//! `cloaksim` command-line tool.
//!
//! Exit codes: 0 success, 2 usage, 3 solver diagnostic, 4 scope guard,
//! 1 anything else (I/O).

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use cloaksim::experiments::ExperimentError;
use cloaksim::mode_solver::SolverError;
use thiserror::Error;

use args::{Cli, Command};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("{0}")]
    Scope(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Scope(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

fn scope_message(omega: f64, n: u32) -> String {
    format!(
        "omega = {omega} is resonant (j_{n}(omega) = 0): the limit field is not defined there; \
         the resonant case needs the nonlocal limit system, which this tool does not solve"
    )
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::OutOfScope { omega, n } => CliError::Scope(scope_message(omega, n)),
            SolverError::Config(m) => CliError::Usage(m),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Solver(s) => s.into(),
            ExperimentError::AtRho {
                source: SolverError::OutOfScope { omega, n },
                ..
            } => CliError::Scope(scope_message(omega, n)),
            ExperimentError::Config(m) => CliError::Usage(m),
            other => CliError::Solver(other.to_string()),
        }
    }
}

fn run() -> Result<(), CliError> {
    let raw = args::expand_config(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(raw) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match cli.command {
        Command::Resonances(a) => commands::resonances(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Material(a) => commands::material(&a),
        Command::LimitCompare(a) => commands::limit_compare(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
