//! The `ecgnet` command line: preprocess, train, evaluate, explain,
//! inspect and synth. Every subcommand that writes files also writes a
//! `run-manifest.json` holding the effective configuration.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use args::{Cli, Command};
use config::RunConfig;
use error::CliResult;

/// Merges config file and flags, then runs the subcommand.
pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cli.command.apply(&mut cfg);
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.validate_threads()?;
    match &cli.command {
        Command::Preprocess(_) => commands::preprocess::run(&cfg),
        Command::Train(_) => commands::train::run(&cfg),
        Command::Evaluate(_) => commands::evaluate::run(&cfg),
        Command::Explain(_) => commands::explain::run(&cfg),
        Command::Inspect(a) => commands::inspect::run(&cfg, a.format),
        Command::Synth(_) => commands::synth::run(&cfg),
    }
}
