use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::Table;

use crate::error::{io_err, CliResult};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Provenance of one command invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    /// SHA-256 of the serialized `resolved` table.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
    pub output_dir: PathBuf,
    pub args: Vec<String>,
    pub resolved: Table,
}

pub fn config_hash(resolved: &Table) -> String {
    let text = toml::to_string(resolved).expect("table serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, seed: Option<u64>, output_dir: &Path, resolved: Table) -> Self {
        Self {
            command: command.into(),
            config_path: config_path.map(Path::to_path_buf),
            config_hash: config_hash(&resolved),
            seed,
            version: VERSION.into(),
            output_dir: output_dir.to_path_buf(),
            args: std::env::args().skip(1).collect(),
            resolved,
        }
    }

    /// Writes `<output_dir>/<command>.manifest.toml`.
    pub fn write(&self) -> CliResult<PathBuf> {
        let path = self.output_dir.join(format!("{}.manifest.toml", self.command));
        let text = toml::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}
