use std::fmt::Write as _;

use anyhow::anyhow;
use jubilee::analysis::{self, PolicySummary};
use jubilee::RevisionSpec;
use serde::Serialize;

use crate::output::{write_atomic, write_json, Stamped};
use crate::{exit, Context, Failure, OrExit};

#[derive(clap::Args)]
pub struct Args {
    /// Revision slopes to compare.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
    pub alphas: Vec<f64>,
    /// Type profiles drawn per slope (the same draws for every slope).
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
}

#[derive(Serialize)]
struct Row {
    alpha: f64,
    #[serde(flatten)]
    summary: PolicySummary,
}

#[derive(Serialize)]
struct Table {
    command: &'static str,
    draws: usize,
    rows: Vec<Row>,
}

pub fn run(ctx: &Context, args: Args) -> Result<u8, Failure> {
    if args.draws == 0 {
        return Err(anyhow!("--draws must be positive")).or_exit(exit::DOMAIN);
    }
    let seed = ctx.analysis_seed();
    let mut rows = Vec::with_capacity(args.alphas.len());
    for &alpha in &args.alphas {
        let revision = if alpha == 0.0 { RevisionSpec::Zero } else { RevisionSpec::Linear { alpha } };
        let params = ctx.config.market.with_revision(revision).or_exit(exit::DOMAIN)?;
        let summary = analysis::simulate_policy(&params, args.draws, seed).or_exit(exit::DOMAIN)?;
        rows.push(Row { alpha, summary });
    }

    ctx.say(format!("{:>6} {:>22} {:>22} {:>22}", "alpha", "P(settle)", "E[forgiveness]", "debtor profit"));
    for r in &rows {
        let s = &r.summary;
        let cell = |e: jubilee::Estimate| format!("{:.6} ± {:.6}", e.value, e.std_error);
        ctx.say(format!(
            "{:>6} {:>22} {:>22} {:>22}",
            r.alpha,
            cell(s.settlement_probability),
            cell(s.expected_forgiveness),
            cell(s.debtor_profit)
        ));
    }

    if let Some(path) = &ctx.out {
        let table = Table { command: "simulate", draws: args.draws, rows };
        write_json(&path.with_extension("json"), &Stamped::new(&ctx.config_hash, Some(seed), &table))
            .or_exit(exit::CONFIG)?;
        write_atomic(&path.with_extension("csv"), to_csv(&table, &ctx.config_hash, seed).as_bytes())
            .or_exit(exit::CONFIG)?;
    }
    Ok(exit::OK)
}

fn to_csv(table: &Table, config_hash: &str, seed: u64) -> String {
    let mut out = String::from(
        "alpha,settlement_probability,settlement_probability_se,expected_forgiveness,expected_forgiveness_se,\
         debtor_profit,debtor_profit_se,draws,seed,config_hash\n",
    );
    for r in &table.rows {
        let s = &r.summary;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.alpha,
            s.settlement_probability.value,
            s.settlement_probability.std_error,
            s.expected_forgiveness.value,
            s.expected_forgiveness.std_error,
            s.debtor_profit.value,
            s.debtor_profit.std_error,
            table.draws,
            seed,
            config_hash
        )
        .expect("writing to a String");
    }
    out
}
