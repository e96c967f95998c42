use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema_version: u32,
    command: &'a str,
    tool_version: &'a str,
    result: &'a T,
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))
}

/// `out.jsonl` → `out.report.json`.
pub fn beside(output: &Path) -> PathBuf {
    output.with_extension("report.json")
}

pub fn write(path: &Path, command: &str, result: &impl Serialize) -> Result<()> {
    let env = Envelope { schema_version: SCHEMA_VERSION, command, tool_version: env!("CARGO_PKG_VERSION"), result };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    tracing::info!(report = %path.display(), "report written");
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// A statistic that may be undefined on the given data, recorded either way.
#[derive(Serialize)]
#[serde(untagged)]
pub enum Outcome<T> {
    Value(T),
    Error { error: String },
}

impl<T, E: std::fmt::Display> From<std::result::Result<T, E>> for Outcome<T> {
    fn from(r: std::result::Result<T, E>) -> Self {
        match r {
            Ok(v) => Outcome::Value(v),
            Err(e) => {
                tracing::warn!(error = %e, "statistic undefined");
                Outcome::Error { error: e.to_string() }
            }
        }
    }
}
