use std::path::PathBuf;

use anyhow::{anyhow, Context as _};
use jubilee::mechanism::{self, MarketWarning};
use jubilee::{Outcome, TypeProfile};
use serde::Serialize;

use crate::output::{write_json, Stamped};
use crate::{exit, Context, Failure, OrExit};

#[derive(clap::Args)]
pub struct Args {
    /// Reported types, comma separated, creditor 0 first.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "types_file")]
    pub types: Vec<f64>,
    /// JSON array of reported types.
    #[arg(long, conflicts_with = "types")]
    pub types_file: Option<PathBuf>,
}

#[derive(Serialize)]
struct SettleRecord<'a> {
    command: &'static str,
    types: &'a [f64],
    outcome: &'a Outcome,
    warnings: Vec<MarketWarning>,
}

pub fn read_types(args: &Args) -> anyhow::Result<Vec<f64>> {
    match &args.types_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("{} is not a JSON array of numbers", path.display()))
        }
        None if args.types.is_empty() => Err(anyhow!("no types given")),
        None => Ok(args.types.clone()),
    }
}

pub fn print_outcome(ctx: &Context, outcome: &Outcome) {
    ctx.say(format!("decision: {}", if outcome.solvent { "solvent" } else { "bankrupt" }));
    for (i, (t, f)) in outcome.transfers.iter().zip(&outcome.forgiveness).enumerate() {
        ctx.say(format!("creditor {i}: transfer {t:.6} forgiveness {f:.6}"));
    }
    for flag in &outcome.flags {
        ctx.say(format!("flag: {}", serde_json::to_value(flag).expect("flags serialize").as_str().unwrap_or("?")));
    }
}

pub fn run(ctx: &Context, args: Args) -> Result<u8, Failure> {
    let params = &ctx.config.market;
    let types = read_types(&args).or_exit(exit::DOMAIN)?;
    let profile = TypeProfile::new(params, types.clone()).or_exit(exit::DOMAIN)?;
    let outcome = mechanism::settle(params, &profile).or_exit(exit::DOMAIN)?;
    print_outcome(ctx, &outcome);
    if let Some(path) = &ctx.out {
        let record = SettleRecord { command: "settle", types: &types, outcome: &outcome, warnings: params.warnings() };
        write_json(path, &Stamped::new(&ctx.config_hash, ctx.seed, record)).or_exit(exit::CONFIG)?;
    }
    Ok(if outcome.solvent { exit::OK } else { exit::BANKRUPT })
}
