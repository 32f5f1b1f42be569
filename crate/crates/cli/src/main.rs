//! `bkd`: command-line front end for beacon key distribution.
//!
//! Exit codes are stable; see [`error::CliError::exit_code`] and the README.

mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn run(cli: &Cli) -> Result<i32, CliError> {
    let opts = &cli.global;
    if opts.rng_seed.is_some() && !opts.insecure_test {
        return Err(CliError::InsecureFlagRefused);
    }
    match &cli.command {
        Command::Init(args) => commands::init(opts, args),
        Command::BeaconServe(args) => commands::beacon_serve(opts, args),
        Command::BeaconExport(args) => commands::export(opts, args),
        Command::VerifyChain => commands::verify(opts),
        Command::Propose(args) => commands::propose(opts, args),
        Command::Accept(args) => commands::accept(opts, args),
        Command::Status => commands::status(opts),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("bkd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
