use std::process::ExitCode;

use clap::Parser;
use sirtoc_cli::args::Cli;
use sirtoc_cli::config::parse_config;
use sirtoc_cli::{configure_workers, run, CliError, WORKERS_ENV};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sirtoc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    configure_workers(std::env::var(WORKERS_ENV).ok().as_deref())?;
    let file = match &cli.command.common().config {
        Some(path) => Some(
            std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?,
        ),
        None => None,
    };
    let cfg = parse_config(cli.command.command(), file.as_deref(), cli.command.layer())?;
    run::run(&cfg)
}
