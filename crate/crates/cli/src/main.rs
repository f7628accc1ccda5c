mod args;
mod commands;
mod config;
mod manifest;

use std::fmt;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};
use commands::Ctx;

/// Bad flags or settings; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn dispatch(cli: Cli) -> Result<()> {
    let name = cli.command.name();
    let file = match &cli.config {
        Some(p) => config::load(p, name)?,
        None => config::FileConfig::default(),
    };
    let ctx = Ctx {
        command: name,
        seed: config::resolve_seed(cli.seed, file.seed)?,
        argv: std::env::args().collect(),
        started: manifest::unix_now(),
    };
    match cli.command {
        Command::Import(a) => commands::import(config::merge(&a, &file.table)?, &ctx),
        Command::Extract(a) => commands::extract(config::merge(&a, &file.table)?, &ctx),
        Command::Train(a) => commands::train(config::merge(&a, &file.table)?, &ctx),
        Command::Run(a) => commands::run(config::merge(&a, &file.table)?, &ctx),
        Command::Eval(a) => commands::eval(config::merge(&a, &file.table)?, &ctx),
        Command::Report(a) => commands::report(config::merge(&a, &file.table)?, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
