use std::process::ExitCode;

use clap::Parser;
use hmtree_cli::{render, run, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command, &cli.config) {
        Ok(outcome) => {
            print!("{}", render(&outcome, cli.config.format));
            ExitCode::from(outcome.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::EXIT_CODE as u8)
        }
    }
}
