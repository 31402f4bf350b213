use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Report<'a, P: Serialize, B: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub parameters: P,
    #[serde(flatten)]
    pub body: B,
}

#[derive(Serialize)]
pub struct Versioned<B: Serialize> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: B,
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never observe a partial report.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}
