use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::MetricSettings;
use crate::editors::EditorParams;
use crate::error::{Error, Result};
use crate::metrics::PROB_FLOOR;
use crate::tinylm::{io, Checkpoint, ModelConfig};

pub const TOOL: &str = "editbench";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetId {
    /// `world` or `counterfact`.
    pub kind: String,
    pub name: String,
    pub sha256: String,
    pub n_cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelId {
    pub label: String,
    pub config: ModelConfig,
    pub n_params: usize,
    pub sha256: String,
}

impl ModelId {
    pub fn of(ckpt: &Checkpoint) -> Result<Self> {
        let label = if ckpt.provenance.is_empty() {
            format!("tinylm-{}x{}", ckpt.config.n_layers, ckpt.config.d_model)
        } else {
            ckpt.provenance.clone()
        };
        Ok(Self {
            label,
            config: ckpt.config,
            n_params: ckpt.param_count(),
            sha256: sha256_hex(&io::to_bytes(ckpt)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricManifest {
    pub bootstrap_n: usize,
    pub level: f64,
    pub prob_floor: f64,
    pub nkl_units: String,
    pub object_probability: String,
}

impl From<MetricSettings> for MetricManifest {
    fn from(m: MetricSettings) -> Self {
        Self {
            bootstrap_n: m.bootstrap_n,
            level: m.level,
            prob_floor: PROB_FLOOR,
            nkl_units: "nats".into(),
            object_probability: "first token of \" \" + object".into(),
        }
    }
}

/// Everything an evaluation run depends on. Thread count is deliberately
/// absent: it never changes the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub model: ModelId,
    pub dataset: DatasetId,
    pub cases: Vec<i64>,
    pub editor: EditorParams,
    pub metrics: MetricManifest,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn metric_settings(&self) -> MetricSettings {
        MetricSettings { bootstrap_n: self.metrics.bootstrap_n, level: self.metrics.level }
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(sha256_hex(super::json::to_line(self)?.as_bytes()))
    }
}

/// `explicit`, else `SOURCE_DATE_EPOCH`, else the clock.
pub fn resolve_timestamp(explicit: Option<u64>) -> Result<u64> {
    if let Some(t) = explicit {
        return Ok(t);
    }
    if let Ok(v) = std::env::var("SOURCE_DATE_EPOCH") {
        return v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("SOURCE_DATE_EPOCH is not an integer: {v:?}")));
    }
    Ok(std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn explicit_timestamp_wins() {
        assert_eq!(resolve_timestamp(Some(42)).unwrap(), 42);
    }
}
