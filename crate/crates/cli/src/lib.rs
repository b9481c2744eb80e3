//! Command-line front end: configuration, subcommands and report files.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
mod report;

use args::{Cli, Command};
use error::CliError;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Input(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Sensitivity(a) => commands::sensitivity(a),
        Command::Eb(a) => commands::eb(a),
        Command::Tipping(a) => commands::tipping(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Regimes(a) => commands::regimes(a),
    })
}
