//! One flat `key = value` file for every subcommand.
//!
//! ```text
//! # world
//! relations = 4
//! subjects_per_relation = 8
//! objects_per_relation = 4
//! neighborhood_size = 10
//! canonical_repeats = 3
//! context_pairs = 2
//! max_lead_statements = 3
//! max_line_tokens = 64
//! # model and training
//! n_layers = 2
//! d_model = 64
//! n_heads = 1
//! d_mlp = 256
//! max_seq_len = 64
//! epochs = 80
//! learning_rate = 0.2
//! momentum = 0.9
//! batch_size = 8
//! clip_norm = 1.0
//! min_recall = 0.9
//! # metrics
//! bootstrap_n = 1000
//! level = 0.99
//! # editor keys, see editors::params
//! editor = rome
//! ```

use serde::{Deserialize, Serialize};

use crate::benchmark::WorldSizes;
use crate::editors::{parse_kv, EditorKind, EditorParams};
use crate::error::{Error, Result};
use crate::tinylm::{ModelConfig, TrainSpec};

/// Model dimensions; vocabulary and seed come from the world and the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_mlp: usize,
    pub max_seq_len: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self { n_layers: 2, d_model: 64, n_heads: 1, d_mlp: 256, max_seq_len: 64 }
    }
}

impl ModelShape {
    pub fn config(&self, vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_mlp: self.d_mlp,
            vocab_size,
            max_seq_len: self.max_seq_len,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSettings {
    pub bootstrap_n: usize,
    pub level: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self { bootstrap_n: 1000, level: 0.99 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub world: WorldSizes,
    pub model: ModelShape,
    pub train: TrainSpec,
    pub min_recall: f64,
    pub metrics: MetricSettings,
    /// Editor lines, applied over per-model defaults by [`RunConfig::editor_params`].
    pub editor: Vec<(String, String)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            world: WorldSizes::default(),
            model: ModelShape::default(),
            train: TrainSpec { epochs: 80, learning_rate: 0.2, ..TrainSpec::default() },
            min_recall: 0.9,
            metrics: MetricSettings::default(),
            editor: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (key, value) in parse_kv(text)? {
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>().map_err(|_| Error::Config(format!("{key}: not a number: {v:?}")))
            };
            let int = |v: &str| -> Result<usize> {
                v.parse::<usize>().map_err(|_| Error::Config(format!("{key}: not an integer: {v:?}")))
            };
            match key.as_str() {
                "relations" => c.world.relations = int(&value)?,
                "subjects_per_relation" => c.world.subjects_per_relation = int(&value)?,
                "objects_per_relation" => c.world.objects_per_relation = int(&value)?,
                "neighborhood_size" => c.world.neighborhood_size = int(&value)?,
                "canonical_repeats" => c.world.canonical_repeats = int(&value)?,
                "context_pairs" => c.world.context_pairs = int(&value)?,
                "max_lead_statements" => c.world.max_lead_statements = int(&value)?,
                "max_line_tokens" => c.world.max_line_tokens = int(&value)?,
                "n_layers" => c.model.n_layers = int(&value)?,
                "d_model" => c.model.d_model = int(&value)?,
                "n_heads" => c.model.n_heads = int(&value)?,
                "d_mlp" => c.model.d_mlp = int(&value)?,
                "max_seq_len" => c.model.max_seq_len = int(&value)?,
                "epochs" => c.train.epochs = int(&value)?,
                "learning_rate" => c.train.learning_rate = num(&value)?,
                "momentum" => c.train.momentum = num(&value)?,
                "batch_size" => c.train.batch_size = int(&value)?,
                "clip_norm" => c.train.clip_norm = num(&value)?,
                "min_recall" => c.min_recall = num(&value)?,
                "bootstrap_n" => c.metrics.bootstrap_n = int(&value)?,
                "level" => c.metrics.level = num(&value)?,
                _ => c.editor.push((key, value)),
            }
        }
        // surface bad editor keys now rather than at eval time
        c.editor_params(EditorParams::default())?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_kv(&std::fs::read_to_string(path)?)
    }

    /// The editor lines of this file applied over `base`.
    pub fn editor_params(&self, base: EditorParams) -> Result<EditorParams> {
        let text: String = self.editor.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        EditorParams::from_kv(&text, base, &[])
    }

    /// Per-model defaults, then this file, then an explicit editor choice.
    pub fn editor_for(&self, config: &ModelConfig, kind: Option<EditorKind>) -> Result<EditorParams> {
        let mut p = self.editor_params(EditorParams::for_model(EditorKind::Rome, config))?;
        if let Some(k) = kind {
            p.kind = k;
        }
        p.validate(config)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_editor_keys() {
        let c = RunConfig::from_kv("epochs = 3\nlevel = 0.9\neditor = ft-l\nftl_steps = 4\nrelations = 2").unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.metrics.level, 0.9);
        assert_eq!(c.world.relations, 2);
        let cfg = c.model.config(50, 0);
        let p = c.editor_for(&cfg, None).unwrap();
        assert_eq!((p.kind, p.ftl_steps), (EditorKind::FtL, 4));
        assert_eq!(c.editor_for(&cfg, Some(EditorKind::Rome)).unwrap().kind, EditorKind::Rome);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(RunConfig::from_kv("epoch = 3").is_err());
        assert!(RunConfig::from_kv("epochs = three").is_err());
    }
}
