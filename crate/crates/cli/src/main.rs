//! `ipwf`: pipelines for IP-based website fingerprinting experiments.
//!
//! Exit codes: 0 success, 1 input validation failure, 2 runtime error.
//! Diagnostics go to stderr; data goes to the requested output files.

mod cli;
mod commands;
mod output;

use clap::error::ErrorKind;
use clap::Parser;

fn main() {
    let args = match cli::Cli::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match commands::run(args) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("ipwf: {}", e.message);
            std::process::exit(e.code);
        }
    }
}
