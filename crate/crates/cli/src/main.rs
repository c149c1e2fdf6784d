//! `turnstile` — model evaluation, simulation, workload generation,
//! detection, and reporting from one binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or parameter error,
//! 3 failed `--check`. Diagnostics go to standard error; results go to
//! `--out` files or standard output.

mod commands;

use clap::error::ErrorKind;
use clap::Parser;

use commands::{Cli, CliError};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = commands::run(cli) {
        eprintln!("turnstile: {e}");
        std::process::exit(match e {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::CheckFailed(_) => 3,
        });
    }
}
