//! Roles, message envelopes and framing.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::field::{Evaluator, Fp};
use super::ProtocolError;
use crate::mechanism::Outcome;

pub const PROTOCOL_VERSION: u8 = 1;
/// Frames above this size are rejected before allocation.
pub const MAX_FRAME: u32 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyRole {
    Creditor(usize),
    Evaluator(Evaluator),
    Debtor,
    /// Only present in ideal-backend transcripts.
    TrustedParty,
}

impl PartyRole {
    pub const E1: PartyRole = PartyRole::Evaluator(Evaluator::E1);
    pub const E2: PartyRole = PartyRole::Evaluator(Evaluator::E2);

    /// Every role taking part in a session with `creditors` creditors.
    pub fn session_roles(creditors: usize) -> Vec<PartyRole> {
        let mut roles: Vec<PartyRole> = (0..creditors).map(PartyRole::Creditor).collect();
        roles.extend([PartyRole::E1, PartyRole::E2, PartyRole::Debtor]);
        roles
    }
}

impl fmt::Display for PartyRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyRole::Creditor(i) => write!(f, "C{i}"),
            PartyRole::Evaluator(Evaluator::E1) => f.write_str("E1"),
            PartyRole::Evaluator(Evaluator::E2) => f.write_str("E2"),
            PartyRole::Debtor => f.write_str("D"),
            PartyRole::TrustedParty => f.write_str("TP"),
        }
    }
}

impl FromStr for PartyRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "E1" => Ok(PartyRole::E1),
            "E2" => Ok(PartyRole::E2),
            "D" => Ok(PartyRole::Debtor),
            "TP" => Ok(PartyRole::TrustedParty),
            _ => s
                .strip_prefix('C')
                .and_then(|i| i.parse().ok())
                .map(PartyRole::Creditor)
                .ok_or_else(|| format!("unknown role {s:?}")),
        }
    }
}

impl Serialize for PartyRole {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartyRole {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Share,
    Mask,
    Reveal,
    Outcome,
}

/// One evaluator's share of a masked-comparison preprocessing bundle:
/// a multiplication triple `c = a·b` and the positive mask `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DealerShare {
    pub a: Fp,
    pub b: Fp,
    pub c: Fp,
    pub m: Fp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Body {
    /// Clear report to the trusted party (ideal backend only).
    Report { theta: f64 },
    InputShare { share: Fp },
    DealerItems { items: Vec<DealerShare> },
    OpenMasked { comparison: usize, d: Fp, e: Fp },
    OpenProduct { comparison: usize, w: Fp },
    Decision { solvent: bool },
    TransferShare { creditor: usize, share: Fp },
    Settlement { solvent: bool, transfer: f64, forgiveness: f64 },
    /// Trusted party's instruction to the debtor (ideal backend only).
    Instruction { outcome: Outcome },
}

impl Body {
    pub fn kind(&self) -> Kind {
        match self {
            Body::Report { .. } | Body::InputShare { .. } => Kind::Share,
            Body::DealerItems { .. } => Kind::Mask,
            Body::OpenMasked { .. } | Body::OpenProduct { .. } | Body::TransferShare { .. } => Kind::Reveal,
            Body::Decision { .. } | Body::Settlement { .. } | Body::Instruction { .. } => Kind::Outcome,
        }
    }

    /// `(round, position within round)`.
    pub fn order_key(&self) -> (u8, usize) {
        match *self {
            Body::Report { .. } | Body::InputShare { .. } => (1, 0),
            Body::DealerItems { .. } => (2, 0),
            Body::OpenMasked { comparison: 0, .. } => (3, 0),
            Body::OpenProduct { comparison: 0, .. } => (4, 0),
            Body::Decision { .. } | Body::Instruction { .. } => (5, 0),
            Body::OpenMasked { comparison, .. } => (6, comparison),
            Body::OpenProduct { comparison, .. } => (7, comparison),
            Body::TransferShare { creditor, .. } => (8, creditor),
            Body::Settlement { .. } => (9, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub v: u8,
    pub session: String,
    pub from: PartyRole,
    pub to: PartyRole,
    pub kind: Kind,
    pub body: Body,
}

impl Envelope {
    pub fn new(session: &str, from: PartyRole, to: PartyRole, body: Body) -> Self {
        Self { v: PROTOCOL_VERSION, session: session.to_owned(), from, to, kind: body.kind(), body }
    }

    /// Total order used for transcripts: round, sender, receiver, position.
    pub fn sort_key(&self) -> (u8, PartyRole, PartyRole, usize) {
        let (round, pos) = self.body.order_key();
        (round, self.from, self.to, pos)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("envelopes always serialize")
    }

    /// Parses a payload, checking the version before the shape.
    pub fn from_json(payload: &[u8]) -> Result<Self, ProtocolError> {
        let value: serde_json::Value =
            serde_json::from_slice(payload).map_err(|e| ProtocolError::Malformed(format!("not JSON: {e}")))?;
        match value.get("v").and_then(|v| v.as_u64()) {
            Some(v) if v == PROTOCOL_VERSION as u64 => {}
            Some(v) => return Err(ProtocolError::VersionMismatch { got: v, expected: PROTOCOL_VERSION }),
            None => return Err(ProtocolError::Malformed("missing version".into())),
        }
        let env: Envelope =
            serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(format!("bad envelope: {e}")))?;
        if env.kind != env.body.kind() {
            return Err(ProtocolError::Malformed(format!("kind {:?} does not match body", env.kind)));
        }
        Ok(env)
    }
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> std::io::Result<()> {
    let len = u32::try_from(payload.len()).ok().filter(|&l| l <= MAX_FRAME).ok_or_else(|| {
        std::io::Error::new(std::io::ErrorKind::InvalidInput, "frame too large")
    })?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, ProtocolError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(ProtocolError::Io(e.to_string())),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(ProtocolError::Malformed(format!("frame of {len} bytes")));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)
        .map_err(|e| ProtocolError::Malformed(format!("truncated frame: {e}")))?;
    Ok(Some(payload))
}
