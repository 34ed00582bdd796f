use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use jubilee::analysis::QuadratureSpec;
use jubilee::protocol::{PartyRole, SessionConfig, DEFAULT_FRACTIONAL_BITS};
use jubilee::MarketParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub market: MarketParams,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportKind {
    #[default]
    InProcess,
    Tcp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default)]
    pub endpoints: BTreeMap<PartyRole, SocketAddr>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_fractional_bits")]
    pub fractional_bits: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub session: Option<String>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            transport: TransportKind::default(),
            endpoints: BTreeMap::new(),
            seed: None,
            fractional_bits: default_fractional_bits(),
            timeout_ms: default_timeout_ms(),
            session: None,
        }
    }
}

fn default_fractional_bits() -> u32 {
    DEFAULT_FRACTIONAL_BITS
}

fn default_timeout_ms() -> u64 {
    10_000
}

/// A parsed config and the SHA-256 of its canonical JSON form.
pub struct Loaded {
    pub config: Config,
    pub hash: String,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("config {} is not JSON", path.display()))?;
    // serde_json maps are key-sorted, so this is whitespace- and order-independent.
    let canonical = serde_json::to_vec(&value)?;
    let hash = hex::encode(Sha256::digest(&canonical));
    let config: Config =
        serde_json::from_value(value).with_context(|| format!("config {} failed validation", path.display()))?;
    Ok(Loaded { config, hash })
}

impl ProtocolSection {
    pub fn session(&self, seed: Option<u64>) -> SessionConfig {
        let mut session = SessionConfig::new(seed);
        if let Some(id) = &self.session {
            session.session = id.clone();
        }
        session.fractional_bits = self.fractional_bits;
        session.round_timeout = Duration::from_millis(self.timeout_ms);
        session
    }
}
