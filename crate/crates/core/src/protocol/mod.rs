//! Settlement without a trusted party.
//!
//! Creditors split their types into additive shares for two evaluators
//! `E1` and `E2`, who evaluate the two-creditor settlement circuit on shares.
//! The debtor deals the multiplication triples and masks used by the one
//! comparison and receives the transfers. Security is semi-honest and assumes
//! the evaluators do not collude; [`ProtocolTranscript::leakage_notes`]
//! records what each run discloses beyond its output.
//!
//! [`ideal_run`] is the trusted-party reference used for differential tests.

pub mod field;
mod session;
pub mod transport;
pub mod wire;

use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener};
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::error::Error;
use crate::mechanism::{self, MarketParams, Outcome, OutcomeFlag, TypeProfile};

pub use field::{decode, encode, reconstruct, share_input, Evaluator, FixedPoint, Fp, Share, DEFAULT_FRACTIONAL_BITS, MODULUS};
pub use transport::{in_process_network, InProcessTransport, TcpTransport, Transport};
pub use wire::{Body, Envelope, Kind, PartyRole, PROTOCOL_VERSION};

use session::Circuit;
use transport::Mailbox;

pub const DEFAULT_ROUND_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("{role} timed out waiting for {waiting_for}")]
    Timeout { role: PartyRole, waiting_for: String },
    #[error("connection to {peer} at {addr} refused")]
    ConnectionRefused { peer: PartyRole, addr: String },
    #[error("protocol version {got} received, this build speaks {expected}")]
    VersionMismatch { got: u64, expected: u8 },
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("field overflow: {0}")]
    FieldOverflow(String),
    #[error("unsupported session: {0}")]
    Unsupported(String),
    #[error("no channel or endpoint for {0}")]
    UnknownPeer(PartyRole),
    #[error("creditor {0} has no input")]
    MissingInput(usize),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Mechanism(#[from] Error),
}

impl ProtocolError {
    /// Process exit status for party launchers.
    pub fn exit_code(&self) -> i32 {
        match self {
            ProtocolError::Timeout { .. } => 5,
            ProtocolError::ConnectionRefused { .. } => 6,
            ProtocolError::VersionMismatch { .. } => 7,
            ProtocolError::Malformed(_) => 8,
            ProtocolError::Io(_) => 1,
            ProtocolError::FieldOverflow(_)
            | ProtocolError::Unsupported(_)
            | ProtocolError::UnknownPeer(_)
            | ProtocolError::MissingInput(_)
            | ProtocolError::Mechanism(_) => 2,
        }
    }
}

/// Session-wide settings every party must agree on.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub session: String,
    /// Per-party randomness is derived from this; system entropy when absent.
    pub seed: Option<u64>,
    pub fractional_bits: u32,
    pub round_timeout: Duration,
}

impl SessionConfig {
    pub fn new(seed: Option<u64>) -> Self {
        let id = seed.unwrap_or_else(|| rand::rngs::OsRng.next_u64());
        Self {
            session: format!("jubilee-{id:016x}"),
            seed,
            fractional_bits: DEFAULT_FRACTIONAL_BITS,
            round_timeout: DEFAULT_ROUND_TIMEOUT,
        }
    }

    /// Width of the band around `A = S` where a fixed-point decision may
    /// differ from the real-valued one.
    pub fn quantization_band(&self) -> f64 {
        (2.0 - self.fractional_bits as f64).exp2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalTransport {
    InProcess,
    /// Real sockets on 127.0.0.1 with kernel-assigned ports.
    TcpLoopback,
}

/// What one party knows at the end of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyOutcome {
    pub session: String,
    pub role: PartyRole,
    pub solvent: bool,
    /// Entries the party does not learn are `null`.
    pub transfers: Vec<Option<f64>>,
    pub forgiveness: Vec<Option<f64>>,
}

impl PartyOutcome {
    pub(crate) fn new(session: &str, role: PartyRole, solvent: bool, creditors: usize) -> Self {
        Self {
            session: session.to_owned(),
            role,
            solvent,
            transfers: vec![None; creditors],
            forgiveness: vec![None; creditors],
        }
    }
}

/// One party's messages, sent and received, and its final knowledge.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyView {
    pub messages: Vec<Envelope>,
    pub outcome: PartyOutcome,
}

impl PartyView {
    /// JSON lines: one message per line, the outcome last.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&String::from_utf8(m.to_json()).expect("JSON is UTF-8"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.outcome).expect("outcome serializes"));
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub session: String,
    /// Sorted by round, sender, receiver.
    pub messages: Vec<Envelope>,
    pub outcome: Outcome,
    pub leakage_notes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranscriptFooter {
    session: String,
    outcome: Outcome,
    leakage_notes: Vec<String>,
}

impl ProtocolTranscript {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&String::from_utf8(m.to_json()).expect("JSON is UTF-8"));
            out.push('\n');
        }
        let footer = TranscriptFooter {
            session: self.session.clone(),
            outcome: self.outcome.clone(),
            leakage_notes: self.leakage_notes.clone(),
        };
        out.push_str(&serde_json::to_string(&footer).expect("footer serializes"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ProtocolError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let (last, body) = lines.split_last().ok_or_else(|| ProtocolError::Malformed("empty transcript".into()))?;
        let footer: TranscriptFooter =
            serde_json::from_str(last).map_err(|e| ProtocolError::Malformed(format!("transcript footer: {e}")))?;
        let messages = body.iter().map(|l| Envelope::from_json(l.as_bytes())).collect::<Result<_, _>>()?;
        Ok(Self { session: footer.session, messages, outcome: footer.outcome, leakage_notes: footer.leakage_notes })
    }

    /// Messages carrying a transfer value or a share of one.
    pub fn opened_transfers(&self) -> impl Iterator<Item = &Envelope> {
        self.messages
            .iter()
            .filter(|m| matches!(m.body, Body::TransferShare { .. } | Body::Settlement { solvent: true, .. }))
    }
}

fn sort_messages(messages: &mut [Envelope]) {
    messages.sort_by_key(Envelope::sort_key);
}

/// Reference run through a trusted party: creditors report in clear, the
/// trusted party applies the mechanism and instructs everyone.
pub fn ideal_run(params: &MarketParams, profile: &TypeProfile) -> Result<(Outcome, ProtocolTranscript), Error> {
    let outcome = mechanism::settle(params, profile)?;
    let session = "ideal";
    let tp = PartyRole::TrustedParty;
    let mut messages = Vec::new();
    for (i, &theta) in profile.types().iter().enumerate() {
        messages.push(Envelope::new(session, PartyRole::Creditor(i), tp, Body::Report { theta }));
        messages.push(Envelope::new(
            session,
            tp,
            PartyRole::Creditor(i),
            Body::Settlement {
                solvent: outcome.solvent,
                transfer: outcome.transfers[i],
                forgiveness: outcome.forgiveness[i],
            },
        ));
    }
    messages.push(Envelope::new(session, tp, PartyRole::Debtor, Body::Instruction { outcome: outcome.clone() }));
    sort_messages(&mut messages);
    let transcript = ProtocolTranscript {
        session: session.into(),
        messages,
        outcome: outcome.clone(),
        leakage_notes: vec!["Trusted party: every report is seen in clear by TP.".into()],
    };
    Ok((outcome, transcript))
}

fn party_rng(seed: Option<u64>, role: PartyRole) -> ChaCha8Rng {
    match seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let stream = match role {
                PartyRole::Creditor(i) => 16 + i as u64,
                PartyRole::Evaluator(Evaluator::E1) => 1,
                PartyRole::Evaluator(Evaluator::E2) => 2,
                PartyRole::Debtor => 3,
                PartyRole::TrustedParty => 4,
            };
            rng.set_stream(stream);
            rng
        }
        None => ChaCha8Rng::from_entropy(),
    }
}

fn run_role(
    circuit: &Circuit,
    role: PartyRole,
    input: Option<f64>,
    transport: Box<dyn Transport>,
    config: &SessionConfig,
) -> Result<PartyView, ProtocolError> {
    let mut mb = Mailbox::new(transport, role, &config.session, config.round_timeout);
    let mut rng = party_rng(config.seed, role);
    let session = config.session.as_str();
    let outcome = match role {
        PartyRole::Creditor(i) => {
            let theta = input.ok_or(ProtocolError::MissingInput(i))?;
            session::run_creditor(&mut mb, circuit, session, i, theta, &mut rng)?
        }
        PartyRole::Evaluator(e) => session::run_evaluator(&mut mb, circuit, session, e)?,
        PartyRole::Debtor => session::run_debtor(&mut mb, circuit, session, &mut rng)?,
        PartyRole::TrustedParty => {
            return Err(ProtocolError::Unsupported("the trusted party only exists in ideal runs".into()))
        }
    };
    let mut messages = mb.log;
    sort_messages(&mut messages);
    Ok(PartyView { messages, outcome })
}

fn check_role(params: &MarketParams, role: PartyRole, input: Option<f64>) -> Result<(), ProtocolError> {
    if !PartyRole::session_roles(params.creditors()).contains(&role) {
        return Err(ProtocolError::Unsupported(format!("{role} is not a role in this session")));
    }
    if let PartyRole::Creditor(i) = role {
        let theta = input.ok_or(ProtocolError::MissingInput(i))?;
        params.distribution().check_in_support(theta)?;
    }
    Ok(())
}

/// Runs every role of one session locally, each on its own thread.
///
/// Returns the debtor's outcome and the merged transcript of all messages.
/// `QuantizationBand` is flagged when the clear profile lies within the
/// fixed-point band around the settlement boundary, where the decision may
/// legitimately differ from [`mechanism::settle`].
pub fn mpc_run(
    params: &MarketParams,
    profile: &TypeProfile,
    transport: LocalTransport,
    config: &SessionConfig,
) -> Result<(Outcome, ProtocolTranscript), ProtocolError> {
    let circuit = Circuit::new(params, config.fractional_bits)?;
    if profile.len() != params.creditors() {
        return Err(Error::ProfileLength { got: profile.len(), expected: params.creditors() }.into());
    }
    let roles = PartyRole::session_roles(params.creditors());
    let input = |role: PartyRole| match role {
        PartyRole::Creditor(i) => Some(profile.types()[i]),
        _ => None,
    };
    for &role in &roles {
        check_role(params, role, input(role))?;
    }

    let mut transports: Vec<(PartyRole, Box<dyn Transport>)> = match transport {
        LocalTransport::InProcess => in_process_network(&roles)
            .into_iter()
            .map(|(r, t)| (r, Box::new(t) as Box<dyn Transport>))
            .collect(),
        LocalTransport::TcpLoopback => {
            let listeners = roles
                .iter()
                .map(|&r| TcpListener::bind("127.0.0.1:0").map(|l| (r, l)))
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(|e| ProtocolError::Io(e.to_string()))?;
            let endpoints: BTreeMap<PartyRole, SocketAddr> = listeners
                .iter()
                .map(|(r, l)| l.local_addr().map(|a| (*r, a)))
                .collect::<std::io::Result<_>>()
                .map_err(|e| ProtocolError::Io(e.to_string()))?;
            listeners
                .into_iter()
                .map(|(r, l)| {
                    let t = TcpTransport::with_listener(l, endpoints.clone(), config.round_timeout);
                    (r, Box::new(t) as Box<dyn Transport>)
                })
                .collect()
        }
    };

    let results: Vec<(PartyRole, Result<PartyView, ProtocolError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = transports
            .drain(..)
            .map(|(role, t)| {
                let circuit = &circuit;
                (role, scope.spawn(move || run_role(circuit, role, input(role), t, config)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(role, h)| (role, h.join().expect("party thread panicked")))
            .collect()
    });

    // A timeout is usually a symptom of another party failing first.
    if let Some(err) = results
        .iter()
        .filter_map(|(_, r)| r.as_ref().err())
        .min_by_key(|e| matches!(e, ProtocolError::Timeout { .. }))
    {
        return Err(err.clone());
    }
    let views: BTreeMap<PartyRole, PartyView> = results.into_iter().map(|(r, v)| (r, v.expect("checked"))).collect();

    let debtor = &views[&PartyRole::Debtor].outcome;
    let transfers: Vec<f64> = debtor.transfers.iter().map(|t| t.unwrap_or(0.0)).collect();
    let forgiveness: Vec<f64> = debtor.forgiveness.iter().map(|f| f.unwrap_or(0.0)).collect();
    let mut flags = std::collections::BTreeSet::new();
    if transfers.iter().any(|&t| t > params.debt_share()) {
        flags.insert(OutcomeFlag::TransferExceedsDebt);
    }
    let gap = params.continuation_value() - mechanism::virtual_cost(params, profile.types());
    if gap.abs() < config.quantization_band() {
        flags.insert(OutcomeFlag::QuantizationBand);
    }
    let outcome = Outcome { solvent: debtor.solvent, pivotal: Vec::new(), transfers, forgiveness, flags };

    let mut messages: Vec<Envelope> = views
        .iter()
        .flat_map(|(role, v)| v.messages.iter().filter(move |m| m.from == *role).cloned())
        .collect();
    sort_messages(&mut messages);
    let transcript = ProtocolTranscript {
        session: config.session.clone(),
        messages,
        outcome: outcome.clone(),
        leakage_notes: leakage_notes(&circuit, outcome.solvent),
    };
    Ok((outcome, transcript))
}

/// Runs one role over TCP. `endpoints` must list every role of the session.
pub fn run_party(
    params: &MarketParams,
    role: PartyRole,
    input: Option<f64>,
    endpoints: &BTreeMap<PartyRole, SocketAddr>,
    config: &SessionConfig,
) -> Result<PartyView, ProtocolError> {
    let circuit = Circuit::new(params, config.fractional_bits)?;
    check_role(params, role, input)?;
    if let Some(missing) = PartyRole::session_roles(params.creditors()).into_iter().find(|r| !endpoints.contains_key(r)) {
        return Err(ProtocolError::UnknownPeer(missing));
    }
    let transport = TcpTransport::bind(role, endpoints.clone(), config.round_timeout)?;
    run_role(&circuit, role, input, Box::new(transport), config)
}

fn leakage_notes(circuit: &Circuit, solvent: bool) -> Vec<String> {
    let cmp_bits = circuit.comparison_bits();
    let mut notes = vec![
        "Non-collusion: privacy of the inputs holds only while E1 and E2 do not collude. The debtor deals the \
         triples and masks, so the debtor together with either evaluator learns tau - (theta_0 + theta_1)."
            .to_string(),
        format!(
            "Solvency comparison: both evaluators learn the sign of tau - (theta_0 + theta_1), and the magnitude \
             m * (tau - theta_0 - theta_1) * 2^{cmp_bits} for a secret mask m uniform in [1, 2^{}]; tau = {} is public.",
            session::MASK_BITS,
            circuit.tau
        ),
    ];
    if solvent {
        if circuit.clamp_possible {
            notes.push(format!(
                "Clamp comparisons: for each creditor i both evaluators learn the sign and mask-scaled magnitude \
                 of (tau - {}) - theta_other, i.e. whether creditor i's pivotal type sits at the top of the support.",
                circuit.hi
            ));
        }
        let (c0, c1) = circuit.coefficients(false);
        let (k0, k1) = circuit.coefficients(true);
        notes.push(format!(
            "Output-inherent disclosure: creditor i's transfer is {c0} + {c1} * theta_other, or {k0} + {k1} * \
             theta_other when its pivotal type is clamped at the top. Whenever the slope is non-zero the transfer \
             reveals the other creditor's type to creditor i and to the debtor."
        ));
    } else {
        notes.push("Bankrupt: no transfer value was opened to any party.".into());
    }
    notes
}

/// A message leaf that equals a creditor's input in clear and went to
/// someone other than that creditor.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearInputFinding {
    pub creditor: usize,
    pub message: usize,
    pub to: PartyRole,
}

/// Scans every message body for creditor inputs, as reals or as their
/// fixed-point encodings, addressed to anyone but the owner.
pub fn scan_clear_inputs(messages: &[Envelope], inputs: &[f64], fractional_bits: u32) -> Vec<ClearInputFinding> {
    fn leaves(v: &serde_json::Value, out: &mut Vec<serde_json::Value>) {
        match v {
            serde_json::Value::Object(map) => map.values().for_each(|x| leaves(x, out)),
            serde_json::Value::Array(xs) => xs.iter().for_each(|x| leaves(x, out)),
            other => out.push(other.clone()),
        }
    }
    let encoded: Vec<Option<String>> =
        inputs.iter().map(|&x| encode(x, fractional_bits).ok().map(|f| f.to_string())).collect();
    let mut findings = Vec::new();
    for (index, m) in messages.iter().enumerate() {
        let mut values = Vec::new();
        leaves(&serde_json::to_value(&m.body).expect("bodies serialize"), &mut values);
        for (creditor, &theta) in inputs.iter().enumerate() {
            if m.to == PartyRole::Creditor(creditor) {
                continue;
            }
            let hit = values.iter().any(|v| match v {
                serde_json::Value::Number(n) => n.as_f64() == Some(theta),
                serde_json::Value::String(s) => encoded[creditor].as_deref() == Some(s.as_str()),
                _ => false,
            });
            if hit {
                findings.push(ClearInputFinding { creditor, message: index, to: m.to });
            }
        }
    }
    findings
}

/// Chi-square p-value for field elements being uniform over `buckets`
/// equal slices of `Z_p`.
pub fn share_uniformity_p_value(values: &[Fp], buckets: usize) -> f64 {
    assert!(buckets >= 2 && !values.is_empty());
    let mut counts = vec![0usize; buckets];
    for v in values {
        counts[(v.value() as u128 * buckets as u128 / MODULUS as u128) as usize] += 1;
    }
    let expected = values.len() as f64 / buckets as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    ChiSquared::new((buckets - 1) as f64).expect("positive degrees of freedom").sf(stat)
}
