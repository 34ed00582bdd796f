use anyhow::anyhow;
use clap::ValueEnum;
use jubilee::protocol::{self, Evaluator, LocalTransport, PartyOutcome, PartyRole, ProtocolError};
use jubilee::TypeProfile;
use serde::Serialize;

use crate::config::TransportKind;
use crate::output::{write_atomic, Stamped};
use crate::settle::print_outcome;
use crate::{exit, Context, Failure, OrExit};

#[derive(Clone, Copy, ValueEnum)]
pub enum RoleArg {
    Creditor,
    Debtor,
    Evaluator,
}

#[derive(clap::Args)]
pub struct Args {
    /// Run every party of one session inside this process.
    #[arg(long, conflicts_with_all = ["role", "index", "input"], required_unless_present = "role")]
    pub all_local: bool,
    /// Creditor types for --all-local, creditor 0 first.
    #[arg(long, value_delimiter = ',', requires = "all_local")]
    pub types: Vec<f64>,
    #[arg(long, value_enum)]
    pub role: Option<RoleArg>,
    /// Creditor index (from 0) or evaluator number (1 or 2).
    #[arg(long)]
    pub index: Option<usize>,
    /// This creditor's private type.
    #[arg(long, allow_hyphen_values = true)]
    pub input: Option<f64>,
}

fn protocol_failure(e: ProtocolError) -> Failure {
    let code = u8::try_from(e.exit_code()).unwrap_or(1);
    Failure { code, error: e.into() }
}

#[derive(Serialize)]
struct SessionFooter<'a> {
    session: &'a str,
    outcome: &'a jubilee::Outcome,
    leakage_notes: &'a [String],
}

#[derive(Serialize)]
struct PartyFooter<'a> {
    outcome: &'a PartyOutcome,
}

fn jsonl<'a>(messages: impl Iterator<Item = &'a protocol::Envelope>, footer: String) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(std::str::from_utf8(&m.to_json()).expect("JSON is UTF-8"));
        out.push('\n');
    }
    out.push_str(&footer);
    out.push('\n');
    out
}

pub fn run(ctx: &Context, args: Args) -> Result<u8, Failure> {
    if args.all_local {
        run_local(ctx, args)
    } else {
        run_one(ctx, args)
    }
}

fn run_local(ctx: &Context, args: Args) -> Result<u8, Failure> {
    let params = &ctx.config.market;
    let section = &ctx.config.protocol;
    let profile = TypeProfile::new(params, args.types).or_exit(exit::DOMAIN)?;
    let transport = match section.transport {
        TransportKind::InProcess => LocalTransport::InProcess,
        TransportKind::Tcp => LocalTransport::TcpLoopback,
    };
    let session = section.session(ctx.seed);
    let (outcome, transcript) = protocol::mpc_run(params, &profile, transport, &session).map_err(protocol_failure)?;
    ctx.say(format!("session: {}", transcript.session));
    print_outcome(ctx, &outcome);
    for note in &transcript.leakage_notes {
        ctx.say(format!("leakage: {note}"));
    }
    if let Some(path) = &ctx.out {
        let footer = SessionFooter {
            session: &transcript.session,
            outcome: &transcript.outcome,
            leakage_notes: &transcript.leakage_notes,
        };
        let footer = serde_json::to_string(&Stamped::new(&ctx.config_hash, ctx.seed, footer)).expect("serializes");
        write_atomic(path, jsonl(transcript.messages.iter(), footer).as_bytes()).or_exit(exit::CONFIG)?;
    }
    Ok(exit::OK)
}

fn run_one(ctx: &Context, args: Args) -> Result<u8, Failure> {
    let params = &ctx.config.market;
    let section = &ctx.config.protocol;
    let role = match (args.role.expect("clap requires a role"), args.index) {
        (RoleArg::Creditor, Some(i)) => PartyRole::Creditor(i),
        (RoleArg::Creditor, None) => return Err(anyhow!("--role creditor needs --index")).or_exit(exit::DOMAIN),
        (RoleArg::Debtor, _) => PartyRole::Debtor,
        (RoleArg::Evaluator, Some(1)) => PartyRole::Evaluator(Evaluator::E1),
        (RoleArg::Evaluator, Some(2)) => PartyRole::Evaluator(Evaluator::E2),
        (RoleArg::Evaluator, _) => return Err(anyhow!("--role evaluator needs --index 1 or 2")).or_exit(exit::DOMAIN),
    };
    if matches!(role, PartyRole::Creditor(_)) && args.input.is_none() {
        return Err(anyhow!("--role creditor needs --input")).or_exit(exit::DOMAIN);
    }
    if section.endpoints.is_empty() {
        return Err(anyhow!("protocol.endpoints must list every role")).or_exit(exit::CONFIG);
    }
    if section.session.is_none() && ctx.seed.is_none() {
        return Err(anyhow!("networked parties need protocol.session or a seed to agree on the session id"))
            .or_exit(exit::CONFIG);
    }
    let session = section.session(ctx.seed);
    let view = protocol::run_party(params, role, args.input, &section.endpoints, &session).map_err(protocol_failure)?;
    let o = &view.outcome;
    ctx.say(format!("session: {}", o.session));
    ctx.say(format!("{role}: {}", if o.solvent { "solvent" } else { "bankrupt" }));
    for (i, (t, f)) in o.transfers.iter().zip(&o.forgiveness).enumerate() {
        if let (Some(t), Some(f)) = (t, f) {
            ctx.say(format!("creditor {i}: transfer {t:.6} forgiveness {f:.6}"));
        }
    }
    if let Some(path) = &ctx.out {
        let footer = serde_json::to_string(&Stamped::new(&ctx.config_hash, ctx.seed, PartyFooter { outcome: o }))
            .expect("serializes");
        write_atomic(path, jsonl(view.messages.iter(), footer).as_bytes()).or_exit(exit::CONFIG)?;
    }
    Ok(exit::OK)
}
