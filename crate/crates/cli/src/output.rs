use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// Header fields carried by every output file.
#[derive(Serialize)]
pub struct Stamped<'a, T: Serialize> {
    pub schema_version: u32,
    pub config_hash: &'a str,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub body: T,
}

impl<'a, T: Serialize> Stamped<'a, T> {
    pub fn new(config_hash: &'a str, seed: Option<u64>, body: T) -> Self {
        Self { schema_version: SCHEMA_VERSION, config_hash, seed, body }
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}
