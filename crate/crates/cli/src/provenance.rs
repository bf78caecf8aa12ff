//! Provenance records: enough to re-run any command byte-for-byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use noisy_synth_core::error::Result;

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub config_sha256: Option<String>,
    /// Input file digests, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub settings: SettingsRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slater_satisfied: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slater_positive_eigenvalues: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct SettingsRecord {
    pub eps_strict: f64,
    pub beta_min: f64,
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: u32,
}

impl Default for SettingsRecord {
    fn default() -> Self {
        let s = noisy_synth_core::synth::SynthSettings::default();
        SettingsRecord {
            eps_strict: s.eps_strict,
            beta_min: s.beta_min,
            feas_tol: s.sdp.feas_tol,
            gap_tol: s.sdp.gap_tol,
            max_iter: s.sdp.max_iter,
        }
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Provenance {
    pub fn new(command: &str, seed: u64) -> Self {
        Provenance {
            command: command.to_string(),
            seed,
            config_sha256: None,
            inputs: BTreeMap::new(),
            settings: SettingsRecord::default(),
            slater_satisfied: None,
            slater_positive_eigenvalues: None,
        }
    }

    pub fn record_config(&mut self, path: &Path) -> Result<()> {
        self.config_sha256 = Some(file_sha256(path)?);
        Ok(())
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).expect("provenance serializes");
        std::fs::write(dir.join("provenance.json"), text)?;
        Ok(())
    }
}
