use serde::{Deserialize, Serialize};

use super::params::EditorKind;
use crate::tinylm::params::MLP_BLOCKS;
use crate::tinylm::{BlockId, Checkpoint};

/// Weight change of one layer's MLP blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDelta {
    pub layer: usize,
    pub frobenius: f64,
    pub linf: f64,
}

/// What a rank-one update at one layer used and produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneStep {
    pub layer: usize,
    #[serde(skip)]
    pub key: Vec<f64>,
    #[serde(skip)]
    pub value: Vec<f64>,
    pub key_norm: f64,
    pub value_norm: f64,
    pub residual_norm: f64,
    /// Fraction of the residual applied here.
    pub residual_scale: f64,
    pub denominator: f64,
    pub value_iterations: usize,
    pub value_loss: f64,
    pub value_prob: f64,
    pub value_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneTrace {
    pub layer: usize,
    /// Loss before the first step, then after each step.
    pub losses: Vec<f64>,
    pub max_abs_delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditDiagnostics {
    pub rank_one: Vec<RankOneStep>,
    pub fine_tune: Option<FineTuneTrace>,
}

impl EditDiagnostics {
    pub fn iterations(&self) -> usize {
        match &self.fine_tune {
            Some(f) => f.losses.len().saturating_sub(1),
            None => self.rank_one.iter().map(|s| s.value_iterations).sum(),
        }
    }

    pub fn final_loss(&self) -> Option<f64> {
        match &self.fine_tune {
            Some(f) => f.losses.last().copied(),
            None => self.rank_one.last().map(|s| s.value_loss),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EditOutcome {
    pub editor: EditorKind,
    pub pre: Checkpoint,
    pub post: Checkpoint,
    pub touched_layers: Vec<usize>,
    pub deltas: Vec<LayerDelta>,
    pub diagnostics: EditDiagnostics,
}

impl EditOutcome {
    pub(crate) fn new(editor: EditorKind, pre: &Checkpoint, post: Checkpoint, touched: Vec<usize>, diagnostics: EditDiagnostics) -> Self {
        let deltas = touched.iter().map(|&l| layer_delta(pre, &post, l)).collect();
        Self { editor, pre: pre.clone(), post, touched_layers: touched, deltas, diagnostics }
    }

    /// Blocks that differ between pre and post lie within the MLP blocks
    /// of the touched layers.
    pub fn is_local(&self) -> bool {
        self.pre.differing_blocks(&self.post).iter().all(|b| self.allowed(b))
    }

    fn allowed(&self, b: &BlockId) -> bool {
        matches!(b.layer, Some(l) if self.touched_layers.contains(&l)) && MLP_BLOCKS.contains(&b.name)
    }
}

pub fn layer_delta(pre: &Checkpoint, post: &Checkpoint, layer: usize) -> LayerDelta {
    let (a, b) = (&pre.layers[layer], &post.layers[layer]);
    let mut sq = 0.0;
    let mut linf: f64 = 0.0;
    for (x, y) in [(&a.w_in, &b.w_in), (&a.b_in, &b.b_in), (&a.w_out, &b.w_out), (&a.b_out, &b.b_out)] {
        for (p, q) in x.iter().zip(y) {
            let d = *q as f64 - *p as f64;
            sq += d * d;
            linf = linf.max(d.abs());
        }
    }
    LayerDelta { layer, frobenius: sq.sqrt(), linf }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
