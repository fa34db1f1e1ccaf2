use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and seed of a [`super::Checkpoint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale defaults for a given vocabulary.
    pub fn small(vocab_size: usize) -> Self {
        Self {
            n_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_mlp: 256,
            vocab_size,
            max_seq_len: 64,
            seed: 0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_mlp", self.d_mlp),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_mlp < self.d_model {
            return Err(Error::Config(format!(
                "d_mlp {} smaller than d_model {}",
                self.d_mlp, self.d_model
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        let mut c = ModelConfig::small(10);
        assert!(c.validate().is_ok());
        c.n_heads = 3;
        assert!(c.validate().is_err());
        c = ModelConfig::small(10);
        c.d_mlp = 32;
        assert!(c.validate().is_err());
        c = ModelConfig::small(0);
        assert!(c.validate().is_err());
    }
}
