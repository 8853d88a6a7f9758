use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::EvalConfig;
use crate::error::{Error, Result};

/// Provenance record written next to every output. Apart from
/// `timestamp_unix`, identical inputs give an identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command_line: Vec<String>,
    /// Input path → SHA-256 of its contents, hex encoded.
    pub input_hashes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalConfig>,
    pub timestamp_unix: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(
        command_line: Vec<String>,
        inputs: &[&Path],
        eval: Option<EvalConfig>,
    ) -> Result<Self> {
        let mut input_hashes = BTreeMap::new();
        for path in inputs {
            let bytes = std::fs::read(path).map_err(|e| Error::io(*path, e))?;
            input_hashes.insert(path.display().to_string(), sha256_hex(&bytes));
        }
        let timestamp_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Ok(RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command_line,
            input_hashes,
            eval,
            timestamp_unix,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
