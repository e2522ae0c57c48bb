use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{blob_hash, tree_hash, write_file};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

/// Record of one subcommand invocation. Paths are relative to the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub status: String,
    pub config: serde_json::Value,
    pub input_hash: String,
    pub inputs: Vec<InputDigest>,
    pub checkpoints: Vec<String>,
    pub outputs: Vec<String>,
    pub metrics: serde_json::Value,
    pub wall_clock_seconds: f64,
    pub energy_evaluations: u64,
}

impl RunManifest {
    /// Starts a manifest whose id is derived from the hashed inputs.
    pub fn new(command: &str, config: serde_json::Value, inputs: Vec<(String, Vec<u8>)>) -> Self {
        let inputs: Vec<InputDigest> = inputs
            .into_iter()
            .map(|(name, bytes)| InputDigest {
                name,
                sha256: blob_hash(&bytes),
            })
            .collect();
        let mut entries: Vec<(String, String)> = inputs.iter().map(|d| (d.name.clone(), d.sha256.clone())).collect();
        entries.push(("command".into(), command.into()));
        let input_hash = tree_hash(&entries);
        Self {
            run_id: format!("{command}-{}", &input_hash[..12]),
            command: command.into(),
            status: "running".into(),
            config,
            input_hash,
            inputs,
            checkpoints: Vec::new(),
            outputs: Vec::new(),
            metrics: serde_json::Value::Object(Default::default()),
            wall_clock_seconds: 0.0,
            energy_evaluations: 0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        write_file(&dir.join(MANIFEST_FILE), &bytes)
    }

    /// Output and checkpoint entries that do not exist under `dir`.
    pub fn missing_outputs(&self, dir: &Path) -> Vec<String> {
        self.outputs.iter().chain(&self.checkpoints).filter(|p| !dir.join(p).exists()).cloned().collect()
    }
}
