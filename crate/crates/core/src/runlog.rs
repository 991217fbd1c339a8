//! Append-only metrics logging and the run manifest that makes a run
//! reproducible from its output directory alone.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;

/// Metric names a run may emit. Keeping this closed makes the CSV schema
/// stable across versions.
pub const METRIC_NAMES: &[&str] = &[
    "loss_gh",
    "loss_lh",
    "loss_rec",
    "loss_adv",
    "loss_disc",
    "loss_total",
    "tau_min",
    "tau_max",
    "velocity_std_over_mean",
    "latent_scale",
];

/// Append-only sequence of (epoch, name, value) records with
/// non-decreasing epochs.
#[derive(Debug, Clone, Default)]
pub struct MetricsLog {
    records: Vec<(u32, &'static str, f64)>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; the name must come from the registry and epochs
    /// must never decrease.
    pub fn append(&mut self, epoch: u32, name: &str, value: f64) -> Result<()> {
        let interned = METRIC_NAMES
            .iter()
            .find(|n| **n == name)
            .ok_or_else(|| Error::Contract(format!("metric name '{name}' not in registry")))?;
        if let Some((last, _, _)) = self.records.last() {
            if epoch < *last {
                return Err(Error::Contract(format!(
                    "epoch went backwards: {epoch} after {last}"
                )));
            }
        }
        self.records.push((epoch, interned, value));
        Ok(())
    }

    pub fn records(&self) -> &[(u32, &'static str, f64)] {
        &self.records
    }

    /// Last recorded value of a metric.
    pub fn last(&self, name: &str) -> Option<f64> {
        self.records.iter().rev().find(|(_, n, _)| *n == name).map(|(_, _, v)| *v)
    }

    /// RFC-4180 CSV; names come from a closed registry and values are
    /// plain numbers, so no quoting is ever needed.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "epoch,name,value")?;
        for (epoch, name, value) in &self.records {
            writeln!(out, "{epoch},{name},{value}")?;
        }
        Ok(())
    }
}

/// Everything needed to re-execute a run: the config snapshot, the seed
/// actually used, and content hashes identifying the code and config
/// versions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub started_unix: u64,
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(config: &RunConfig, outputs: &[&str]) -> Self {
        let toml = config.to_toml_string();
        let mut hasher = Sha256::new();
        hasher.update(toml.as_bytes());
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let started_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: hex,
            seed: config.seed,
            started_unix,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest parse: {e}")))
    }
}
