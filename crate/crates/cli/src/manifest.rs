use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Command;

/// Written next to every output. `config` holds the parsed arguments with all
/// defaults filled in, which is what `replay` re-runs; `resolved` records
/// values derived from them (the detection configuration, the chosen box).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: Command,
    pub resolved: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(config: Command, resolved: Value, inputs: Vec<PathBuf>, outputs: Vec<PathBuf>, seed: Option<u64>) -> Self {
        let subcommand = match &config {
            Command::Synth(_) => "synth",
            Command::Moments(_) => "moments",
            Command::Convert(_) => "convert",
            Command::Recover(_) => "recover",
            Command::Verify(_) => "verify",
            Command::Replay(_) => "replay",
        };
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config,
            resolved,
            inputs,
            outputs,
            seed,
        }
    }

    /// `<out>.manifest.json`.
    pub fn path_for(out: &Path) -> PathBuf {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write_for(&self, out: &Path) -> Result<()> {
        self.write_to(&Self::path_for(out))
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
