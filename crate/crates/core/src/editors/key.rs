//! Keys: the post-activation MLP hidden vector read by `W_out`, and the
//! second-moment statistics used to precondition rank-one updates.

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::request::{RewriteRequest, PLACEHOLDER};
use crate::error::{Error, Result};
use crate::tinylm::Checkpoint;

/// A tokenized edit prompt and the position of the subject's last token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectSite {
    pub tokens: Vec<u32>,
    pub subject_position: usize,
}

/// Tokenizes `prefix + " " + filled template` (or just the filled template
/// for an empty prefix) and finds where the subject ends.
pub fn locate_subject(ckpt: &Checkpoint, request: &RewriteRequest, prefix: &str) -> Result<SubjectSite> {
    let idx = request
        .prompt_template
        .find(PLACEHOLDER)
        .ok_or_else(|| Error::Edit(format!("template {:?} has no placeholder", request.prompt_template)))?;
    let lead = if prefix.is_empty() { String::new() } else { format!("{prefix} ") };
    let upto = format!("{lead}{}{}", &request.prompt_template[..idx], request.subject);
    let full = format!("{lead}{}", request.filled_prompt()?);
    let tok = &ckpt.tokenizer;
    let head = tok.encode(&upto);
    let tokens = tok.encode(&full);
    let not_found = || Error::SubjectNotFound { subject: request.subject.clone(), prompt: full.clone() };
    if head.len() < 2 || !tokens.starts_with(&head) {
        return Err(not_found());
    }
    // the subject must also end on a unit boundary of the shorter text
    let subj_only = tok.encode(&format!("{lead}{}", &request.prompt_template[..idx]));
    if subj_only.len() >= head.len() {
        return Err(not_found());
    }
    ckpt.validate_tokens(&tokens)?;
    Ok(SubjectSite { tokens, subject_position: head.len() - 1 })
}

/// Empty prefix first, then `n - 1` corpus sentences drawn with replacement.
pub fn sample_prefixes<S: AsRef<str>>(corpus: &[S], n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![String::new()];
    if corpus.is_empty() {
        out.resize(n.max(1), String::new());
        return out;
    }
    for _ in 1..n {
        out.push(corpus.choose(&mut rng).map(|s| s.as_ref().to_string()).unwrap_or_default());
    }
    out
}

/// Mean key at the subject's last token over the given prefixes.
pub fn collect_key(ckpt: &Checkpoint, request: &RewriteRequest, layer: usize, prefixes: &[String]) -> Result<Vec<f64>> {
    if prefixes.is_empty() {
        return Err(Error::Edit("no prefixes".into()));
    }
    let mut mean = vec![0.0; ckpt.config.d_mlp];
    for prefix in prefixes {
        let site = locate_subject(ckpt, request, prefix)?;
        let keys = ckpt.mlp_keys(&site.tokens, layer)?;
        for (m, k) in mean.iter_mut().zip(&keys[site.subject_position]) {
            *m += k;
        }
    }
    let n = prefixes.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Edit("non-finite key".into()));
    }
    Ok(mean)
}

/// Ridge-regularized key second moment with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct Covariance {
    pub layer: usize,
    pub samples: usize,
    pub ridge: f64,
    pub matrix: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Covariance {
    /// Builds `(1/M) sum k k^T + ridge * mean(diag) * I` from raw keys.
    pub fn from_keys<'a>(layer: usize, keys: impl IntoIterator<Item = &'a [f64]>, dim: usize, ridge: f64) -> Result<Self> {
        let mut acc = DMatrix::<f64>::zeros(dim, dim);
        let mut samples = 0usize;
        for k in keys {
            if k.len() != dim {
                return Err(Error::Edit(format!("key length {} != {dim}", k.len())));
            }
            // upper triangle only, mirrored below
            for i in 0..dim {
                let ki = k[i];
                if ki == 0.0 {
                    continue;
                }
                for j in i..dim {
                    acc[(i, j)] += ki * k[j];
                }
            }
            samples += 1;
        }
        if samples == 0 {
            return Err(Error::Edit("covariance corpus has no positions".into()));
        }
        let m = samples as f64;
        for i in 0..dim {
            for j in i..dim {
                let v = acc[(i, j)] / m;
                acc[(i, j)] = v;
                acc[(j, i)] = v;
            }
        }
        let mean_diag = acc.diagonal().sum() / dim as f64;
        for i in 0..dim {
            acc[(i, i)] += ridge * mean_diag;
        }
        let chol = acc
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Edit(format!("covariance at layer {layer} is not positive definite")))?;
        Ok(Self { layer, samples, ridge, matrix: acc, chol })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `C^-1 k`.
    pub fn solve(&self, k: &[f64]) -> Vec<f64> {
        self.chol.solve(&DVector::from_column_slice(k)).as_slice().to_vec()
    }
}

/// Second moment of keys at `layer` over every position of every corpus
/// sequence.
pub fn estimate_covariance(ckpt: &Checkpoint, corpus: &[Vec<u32>], layer: usize, ridge: f64) -> Result<Covariance> {
    let mut keys = Vec::new();
    for seq in corpus {
        keys.extend(ckpt.mlp_keys(seq, layer)?);
    }
    Covariance::from_keys(layer, keys.iter().map(Vec::as_slice), ckpt.config.d_mlp, ridge)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_key_covariance() {
        let k = [1.0, 2.0];
        let c = Covariance::from_keys(0, [&k[..]], 2, 1e-3).unwrap();
        let md = (1.0 + 4.0) / 2.0;
        assert_eq!(c.matrix[(0, 0)], 1.0 + 1e-3 * md);
        assert_eq!(c.matrix[(0, 1)], 2.0);
        assert_eq!(c.matrix[(1, 0)], 2.0);
        assert_eq!(c.matrix[(1, 1)], 4.0 + 1e-3 * md);
        // rank one without ridge
        assert!(Covariance::from_keys(0, [&k[..]], 2, 0.0).is_err());
        assert!(Covariance::from_keys(0, std::iter::empty(), 2, 1e-3).is_err());
    }

    #[test]
    fn solve_inverts() {
        let keys: [&[f64]; 3] = [&[1.0, 0.0, 2.0], &[0.5, -1.0, 0.0], &[0.0, 3.0, 1.0]];
        let c = Covariance::from_keys(0, keys, 3, 1e-4).unwrap();
        let x = c.solve(&[1.0, 2.0, 3.0]);
        let back = &c.matrix * DVector::from_column_slice(&x);
        for (a, b) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn prefixes_start_empty() {
        let corpus = ["A b.", "C d."];
        let p = sample_prefixes(&corpus, 5, 3);
        assert_eq!(p.len(), 5);
        assert_eq!(p[0], "");
        assert!(p[1..].iter().all(|s| corpus.contains(&s.as_str())));
        assert_eq!(p, sample_prefixes(&corpus, 5, 3));
        assert_eq!(sample_prefixes(&corpus, 1, 0), vec![String::new()]);
    }
}
