//! Library side of the `pulasso` command-line tool.

pub mod args;
pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use args::{Cli, Command};
use commands::Status;
use config::overlay;
use error::CliResult;

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> CliResult<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(error::CliError::Usage("--threads must be positive".into()));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Simulate(a) => commands::simulate(overlay(a, cfg)?),
        Command::Fit(a) => commands::fit(overlay(a, cfg)?),
        Command::Cv(a) => commands::cv(overlay(a, cfg)?),
        Command::Predict(a) => commands::predict(overlay(a, cfg)?),
        Command::Diagnose(a) => commands::diagnose(overlay(a, cfg)?),
        Command::BenchScaling(a) => commands::bench_scaling(overlay(a, cfg)?),
        Command::BenchCompare(a) => commands::bench_compare(overlay(a, cfg)?),
    }
}
