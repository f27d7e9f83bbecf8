use std::process::ExitCode;

use clap::Parser;
use tokenfl::cli::{execute, Cli, Outcome};

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NotEquilibrium) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
