use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand};

mod config;
mod output;
mod protocol;
mod settle;
mod simulate;
mod verify;

pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 1;
    pub const DOMAIN: u8 = 2;
    pub const BANKRUPT: u8 = 3;
    pub const CHECK_FAILED: u8 = 4;
}

/// An error together with the exit status it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub trait OrExit<T> {
    fn or_exit(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

#[derive(Parser)]
#[command(name = "jubilee", version, about = "Optimal debt-relief settlement: compute, verify, simulate, run securely")]
pub struct Cli {
    /// JSON config file.
    #[arg(long, global = true, env = "JUBILEE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides `protocol.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; overrides `output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Settle one reported type profile.
    Settle(settle::Args),
    /// Run the incentive, participation and welfare checks.
    Verify(verify::Args),
    /// Monte Carlo comparative statics over the revision slope.
    Simulate(simulate::Args),
    /// Run the secure settlement protocol, locally or as one networked party.
    Protocol(protocol::Args),
}

/// Shared per-invocation context.
pub struct Context {
    pub config: config::Config,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

impl Context {
    /// The seed used by deterministic analyses.
    pub fn analysis_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let path = cli
        .config
        .ok_or_else(|| anyhow!("no config: pass --config or set JUBILEE_CONFIG"))
        .or_exit(exit::CONFIG)?;
    let loaded = config::load(&path).or_exit(exit::CONFIG)?;
    let seed = cli.seed.or(loaded.config.protocol.seed);
    let ctx = Context {
        out: cli.out.or_else(|| loaded.config.output.clone()),
        config: loaded.config,
        config_hash: loaded.hash,
        seed,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Settle(args) => settle::run(&ctx, args),
        Command::Verify(args) => verify::run(&ctx, args),
        Command::Simulate(args) => simulate::run(&ctx, args),
        Command::Protocol(args) => protocol::run(&ctx, args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
