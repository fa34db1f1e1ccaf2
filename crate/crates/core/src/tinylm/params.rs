use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::tokenizer::Tokenizer;
use crate::error::{Error, Result};

/// Parameters of one pre-norm transformer block. Matrices are row-major
/// `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Vec<f32>,
    pub ln1_b: Vec<f32>,
    pub wq: Vec<f32>,
    pub wk: Vec<f32>,
    pub wv: Vec<f32>,
    pub wo: Vec<f32>,
    pub ln2_g: Vec<f32>,
    pub ln2_b: Vec<f32>,
    /// `[d_mlp][d_model]`
    pub w_in: Vec<f32>,
    pub b_in: Vec<f32>,
    /// `[d_model][d_mlp]`
    pub w_out: Vec<f32>,
    pub b_out: Vec<f32>,
}

pub const LAYER_BLOCKS: [&str; 12] = [
    "ln1_g", "ln1_b", "wq", "wk", "wv", "wo", "ln2_g", "ln2_b", "w_in", "b_in", "w_out", "b_out",
];

/// Names of the MLP blocks within a layer.
pub const MLP_BLOCKS: [&str; 4] = ["w_in", "b_in", "w_out", "b_out"];

impl LayerParams {
    fn blocks(&self) -> [&Vec<f32>; 12] {
        [
            &self.ln1_g, &self.ln1_b, &self.wq, &self.wk, &self.wv, &self.wo, &self.ln2_g,
            &self.ln2_b, &self.w_in, &self.b_in, &self.w_out, &self.b_out,
        ]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<f32>; 12] {
        [
            &mut self.ln1_g, &mut self.ln1_b, &mut self.wq, &mut self.wk, &mut self.wv,
            &mut self.wo, &mut self.ln2_g, &mut self.ln2_b, &mut self.w_in, &mut self.b_in,
            &mut self.w_out, &mut self.b_out,
        ]
    }
}

/// Full model state. Treated as immutable: editors and the trainer return
/// new checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tokenizer: Tokenizer,
    pub provenance: String,
    /// `[vocab][d_model]`
    pub tok_emb: Vec<f32>,
    /// `[max_seq_len][d_model]`
    pub pos_emb: Vec<f32>,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Vec<f32>,
    pub lnf_b: Vec<f32>,
    /// `[vocab][d_model]`
    pub unembed: Vec<f32>,
}

/// Identifies a parameter block, e.g. `layers.1.w_out`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId {
    pub layer: Option<usize>,
    pub name: &'static str,
}

impl std::fmt::Display for BlockId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.layer {
            Some(l) => write!(f, "layers.{l}.{}", self.name),
            None => f.write_str(self.name),
        }
    }
}

impl Checkpoint {
    /// Deterministic GPT-2 style initialization from `config.seed`.
    pub fn init(config: ModelConfig, tokenizer: Tokenizer) -> Result<Self> {
        config.validate()?;
        if tokenizer.vocab_size() != config.vocab_size {
            return Err(Error::Config(format!(
                "tokenizer has {} units, config says {}",
                tokenizer.vocab_size(),
                config.vocab_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let std = 0.02f32;
        let resid_std = std / (2.0 * config.n_layers as f32).sqrt();
        let mut normal = |n: usize, s: f32| -> Vec<f32> {
            let dist = Normal::new(0.0f32, s).expect("positive std");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        };
        let tok_emb = normal(config.vocab_size * d, std);
        let pos_emb = normal(config.max_seq_len * d, std / 2.0);
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                ln1_g: vec![1.0; d],
                ln1_b: vec![0.0; d],
                wq: normal(d * d, std),
                wk: normal(d * d, std),
                wv: normal(d * d, std),
                wo: normal(d * d, resid_std),
                ln2_g: vec![1.0; d],
                ln2_b: vec![0.0; d],
                w_in: normal(config.d_mlp * d, std),
                b_in: vec![0.0; config.d_mlp],
                w_out: normal(d * config.d_mlp, resid_std),
                b_out: vec![0.0; d],
            })
            .collect();
        let unembed = normal(config.vocab_size * d, std);
        Ok(Self {
            config,
            tokenizer,
            provenance: "init".into(),
            tok_emb,
            pos_emb,
            layers,
            lnf_g: vec![1.0; d],
            lnf_b: vec![0.0; d],
            unembed,
        })
    }

    pub fn with_provenance(mut self, label: impl Into<String>) -> Self {
        self.provenance = label.into();
        self
    }

    /// All parameter blocks in serialization order.
    pub fn blocks(&self) -> Vec<(BlockId, &[f32])> {
        let mut out: Vec<(BlockId, &[f32])> = vec![
            (BlockId { layer: None, name: "tok_emb" }, &self.tok_emb),
            (BlockId { layer: None, name: "pos_emb" }, &self.pos_emb),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, block) in LAYER_BLOCKS.iter().zip(layer.blocks()) {
                out.push((BlockId { layer: Some(l), name }, block));
            }
        }
        out.push((BlockId { layer: None, name: "lnf_g" }, &self.lnf_g));
        out.push((BlockId { layer: None, name: "lnf_b" }, &self.lnf_b));
        out.push((BlockId { layer: None, name: "unembed" }, &self.unembed));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out: Vec<&mut Vec<f32>> = vec![&mut self.tok_emb, &mut self.pos_emb];
        for layer in &mut self.layers {
            out.extend(layer.blocks_mut());
        }
        out.push(&mut self.lnf_g);
        out.push(&mut self.lnf_b);
        out.push(&mut self.unembed);
        out
    }

    /// Expected element count of every block, in serialization order.
    pub fn block_shapes(config: &ModelConfig) -> Vec<usize> {
        let d = config.d_model;
        let m = config.d_mlp;
        let mut shapes = vec![config.vocab_size * d, config.max_seq_len * d];
        for _ in 0..config.n_layers {
            shapes.extend([d, d, d * d, d * d, d * d, d * d, d, d, m * d, m, d * m, d]);
        }
        shapes.extend([d, d, config.vocab_size * d]);
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|x| x.is_finite()))
    }

    /// Blocks whose bytes differ between `self` and `other`.
    pub fn differing_blocks(&self, other: &Checkpoint) -> Vec<BlockId> {
        self.blocks()
            .into_iter()
            .zip(other.blocks())
            .filter(|((_, a), (_, b))| {
                a.len() != b.len() || a.iter().zip(b.iter()).any(|(x, y)| x.to_bits() != y.to_bits())
            })
            .map(|((id, _), _)| id)
            .collect()
    }

    /// Bitwise parameter equality (distinguishes `0.0` from `-0.0`).
    pub fn bit_identical(&self, other: &Checkpoint) -> bool {
        self.config == other.config
            && self.tokenizer == other.tokenizer
            && self.differing_blocks(other).is_empty()
    }

    pub(crate) fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.config.n_layers {
            return Err(Error::Index(format!(
                "layer {layer} >= n_layers {}",
                self.config.n_layers
            )));
        }
        Ok(())
    }
}
