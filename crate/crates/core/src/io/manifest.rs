use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seeds that determine every random draw of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub base_seed: u64,
    pub npaths: usize,
    pub path_seeds: Vec<u64>,
}

/// Wall-clock data; excluded from [`Manifest::digest`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    /// Seconds since the Unix epoch at the end of the run.
    pub finished_at: u64,
    pub wall_time_s: f64,
}

impl RunTiming {
    pub fn since(start: SystemTime) -> Self {
        let now = SystemTime::now();
        Self {
            finished_at: now.duration_since(UNIX_EPOCH).unwrap_or(Duration::ZERO).as_secs(),
            wall_time_s: now.duration_since(start).unwrap_or(Duration::ZERO).as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_digest: String,
    pub seeds: SeedRecord,
    /// Output file name → hex SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub summary: serde_json::Value,
    pub timing: Option<RunTiming>,
}

impl Manifest {
    pub fn new(command: &str, config_digest: String, seeds: SeedRecord) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            config_digest,
            seeds,
            outputs: BTreeMap::new(),
            summary: serde_json::Value::Null,
            timing: None,
        }
    }

    /// Writes `bytes` under `dir` and records its digest.
    pub fn write_output(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(dir.join(name), bytes)?;
        self.outputs.insert(name.into(), sha256_hex(bytes));
        Ok(())
    }

    /// Digest of everything except the timing block.
    pub fn digest(&self) -> Result<String> {
        let mut stripped = self.clone();
        stripped.timing = None;
        Ok(sha256_hex(serde_json::to_string(&stripped)?.as_bytes()))
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct WithDigest<'a> {
            #[serde(flatten)]
            manifest: &'a Manifest,
            digest: String,
        }
        let mut s = serde_json::to_string_pretty(&WithDigest {
            manifest: self,
            digest: self.digest()?,
        })?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("manifest.json"), self.to_json()?)?;
        Ok(())
    }
}
