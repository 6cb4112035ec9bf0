//! Run manifests: every output file is accompanied (or embedded) with the
//! command, config digest, seeds and tool version that produced it.

use crate::error::CliError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub tool_version: &'static str,
    /// Random generator family; pinned so traces are reproducible across
    /// machines.
    pub generator: &'static str,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(config_path: &Path, seeds: Vec<u64>) -> Result<Self, CliError> {
        let bytes = std::fs::read(config_path)
            .map_err(|e| CliError::io(e, format!("reading {}", config_path.display())))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let config_digest: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            command: std::env::args().collect::<Vec<_>>().join(" "),
            config_digest,
            seeds,
            tool_version: env!("CARGO_PKG_VERSION"),
            generator: "chacha12",
            timestamp: chrono::Utc::now().to_rfc3339(),
        })
    }

    /// Writes the manifest as a sibling file next to `out`.
    pub fn write_sibling(&self, out: &Path) -> Result<(), CliError> {
        let mut path = out.as_os_str().to_owned();
        path.push(".manifest.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Numerical(format!("serializing manifest: {e}")))?;
        std::fs::write(&path, text)
            .map_err(|e| CliError::io(e, format!("writing {}", Path::new(&path).display())))
    }
}
