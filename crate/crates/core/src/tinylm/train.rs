use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ParamGrads;
use super::params::Checkpoint;
use crate::error::{Error, Result};

/// SGD-with-momentum hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Rescale the batch gradient to at most this global L2 norm; 0 disables.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            epochs: 60,
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 8,
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sequence loss observed during each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains a copy of `ckpt` on `corpus` (token sequences, BOS-prefixed).
pub fn train(ckpt: &Checkpoint, corpus: &[Vec<u32>], spec: &TrainSpec) -> Result<(Checkpoint, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::Config("empty training corpus".into()));
    }
    if spec.batch_size == 0 || !(spec.learning_rate > 0.0) || !(0.0..1.0).contains(&spec.momentum) {
        return Err(Error::Config(format!("invalid training spec {spec:?}")));
    }
    for seq in corpus {
        if seq.len() < 2 {
            return Err(Error::Config("training sequence shorter than two tokens".into()));
        }
        ckpt.validate_tokens(seq)?;
    }

    let mut model = ckpt.clone();
    let mut velocity = ParamGrads::zeros(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut epoch_losses = Vec::with_capacity(spec.epochs);
    let mut step = 0;

    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(spec.batch_size) {
            let mut grads = ParamGrads::zeros(&model);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += model.sequence_loss_grad(&corpus[i], &mut grads, scale)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch, step, loss: batch_loss });
            }
            epoch_loss += batch_loss;

            if spec.clip_norm > 0.0 {
                let norm = grads
                    .blocks
                    .iter()
                    .flat_map(|b| b.iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                if norm > spec.clip_norm {
                    let s = spec.clip_norm / norm;
                    grads.blocks.iter_mut().flatten().for_each(|g| *g *= s);
                }
            }
            for ((param, vel), grad) in model
                .blocks_mut()
                .into_iter()
                .zip(velocity.blocks.iter_mut())
                .zip(&grads.blocks)
            {
                for ((p, v), g) in param.iter_mut().zip(vel.iter_mut()).zip(grad) {
                    *v = spec.momentum * *v + g;
                    *p = (*p as f64 - spec.learning_rate * *v) as f32;
                }
            }
            step += 1;
        }
        epoch_losses.push(epoch_loss / corpus.len() as f64);
    }
    if !model.all_finite() {
        return Err(Error::Diverged { epoch: spec.epochs, step, loss: f64::NAN });
    }
    Ok((model, TrainReport { epoch_losses }))
}
