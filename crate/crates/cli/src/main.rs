//! `exsd`: fit, simulate, diagnose and plot-data export for gated
//! state-dependent Hawkes models.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use config::Cli;

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Outputs were written but a run did not converge or was truncated.
    Soft,
}

fn main() -> ExitCode {
    // usage errors are input errors, not soft failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Soft) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
