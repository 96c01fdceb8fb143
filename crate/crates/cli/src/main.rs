use std::process::ExitCode;

use clap::Parser;

use voltail_cli::args::{Cli, Command};
use voltail_cli::commands::{self, Outcome};

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Analyze(a) => commands::cmd_analyze(&a).map(|(_, o)| o),
        Command::Simulate(a) => commands::cmd_simulate(&a),
        Command::Pdf(a) => commands::cmd_pdf(&a),
        Command::Detrend(a) => commands::cmd_detrend(&a),
        Command::Hist(a) => commands::cmd_hist(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
