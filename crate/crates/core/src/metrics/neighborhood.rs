use std::fmt;

use serde::{Deserialize, Serialize};

use crate::editors::RewriteRequest;
use crate::error::{Error, Result};
use crate::tinylm::{Checkpoint, NextTokenDistribution, Tokenizer};

/// Lower bound applied to post-edit probabilities inside the KL ratio.
pub const PROB_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "BASE")]
    Base,
    #[serde(rename = "PLUS")]
    Plus,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Base, Variant::Plus];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "BASE",
            Variant::Plus => "PLUS",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "NS")]
    Ns,
    #[serde(rename = "NM")]
    Nm,
    #[serde(rename = "NKL")]
    Nkl,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Ns, Metric::Nm, Metric::Nkl];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Ns => "NS",
            Metric::Nm => "NM",
            Metric::Nkl => "NKL",
        }
    }

    pub fn value(self, m: &PromptMeasurement) -> f64 {
        match self {
            Metric::Ns => f64::from(u8::from(m.ns)),
            Metric::Nm => m.nm,
            Metric::Nkl => m.nkl,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PromptKey {
    pub case_id: i64,
    pub prompt_index: usize,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptMeasurement {
    pub case_id: i64,
    pub prompt_index: usize,
    pub variant: Variant,
    pub p_pre_correct: f64,
    pub p_pre_new: f64,
    pub p_post_correct: f64,
    pub p_post_new: f64,
    pub ns: bool,
    pub nm: f64,
    pub nkl: f64,
}

/// Probability of the first token of `" " + object`.
pub fn first_token_prob(dist: &NextTokenDistribution, tokenizer: &Tokenizer, object: &str) -> Result<f64> {
    let id = tokenizer.object_first_token(object)?;
    if dist.len() != tokenizer.vocab_size() {
        return Err(Error::Metric(format!(
            "distribution over {} tokens, vocabulary has {}",
            dist.len(),
            tokenizer.vocab_size()
        )));
    }
    Ok(dist.prob(id))
}

/// `sum_w p_pre[w] ln(p_pre[w] / max(p_post[w], PROB_FLOOR))`, in nats.
pub fn nkl(p_pre: &NextTokenDistribution, p_post: &NextTokenDistribution) -> Result<f64> {
    if p_pre.len() != p_post.len() {
        return Err(Error::Metric(format!("length mismatch: {} vs {}", p_pre.len(), p_post.len())));
    }
    let mut total = 0.0;
    for (&p, &q) in p_pre.probs.iter().zip(&p_post.probs) {
        if p > 0.0 {
            total += p * (p / q.max(PROB_FLOOR)).ln();
        }
    }
    // rounding can leave tiny negatives when the distributions nearly agree
    Ok(total.max(0.0))
}

fn nonempty(ms: &[PromptMeasurement]) -> Result<()> {
    if ms.is_empty() {
        Err(Error::Metric("no measurements".into()))
    } else {
        Ok(())
    }
}

pub fn metric_values(ms: &[PromptMeasurement], metric: Metric) -> Vec<f64> {
    ms.iter().map(|m| metric.value(m)).collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn ns(ms: &[PromptMeasurement]) -> Result<f64> {
    nonempty(ms)?;
    Ok(mean(&metric_values(ms, Metric::Ns)))
}

pub fn nm(ms: &[PromptMeasurement]) -> Result<f64> {
    nonempty(ms)?;
    Ok(mean(&metric_values(ms, Metric::Nm)))
}

pub fn mean_nkl(ms: &[PromptMeasurement]) -> Result<f64> {
    nonempty(ms)?;
    Ok(mean(&metric_values(ms, Metric::Nkl)))
}

/// Next-token distributions of both models at the end of `prompt`, compared
/// on the original and the requested object.
pub fn evaluate_prompt(
    pre: &Checkpoint,
    post: &Checkpoint,
    prompt: &str,
    request: &RewriteRequest,
    key: PromptKey,
) -> Result<PromptMeasurement> {
    let tok = &pre.tokenizer;
    let tokens = tok.encode_strict(prompt)?;
    let d_pre = pre.forward(&tokens)?;
    let d_post = post.forward(&tokens)?;
    let p_post_correct = first_token_prob(&d_post, tok, &request.target_true)?;
    let p_post_new = first_token_prob(&d_post, tok, &request.target_new)?;
    Ok(PromptMeasurement {
        case_id: key.case_id,
        prompt_index: key.prompt_index,
        variant: key.variant,
        p_pre_correct: first_token_prob(&d_pre, tok, &request.target_true)?,
        p_pre_new: first_token_prob(&d_pre, tok, &request.target_new)?,
        p_post_correct,
        p_post_new,
        ns: p_post_correct > p_post_new,
        nm: p_post_correct - p_post_new,
        nkl: nkl(&d_pre, &d_post)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(pc: f64, pn: f64) -> PromptMeasurement {
        PromptMeasurement {
            case_id: 0,
            prompt_index: 0,
            variant: Variant::Base,
            p_pre_correct: pc,
            p_pre_new: pn,
            p_post_correct: pc,
            p_post_new: pn,
            ns: pc > pn,
            nm: pc - pn,
            nkl: 0.0,
        }
    }

    #[test]
    fn counting() {
        let ms: Vec<_> = (0..10).map(|i| if i < 3 { m(0.6, 0.1) } else { m(0.1, 0.6) }).collect();
        assert!((ns(&ms).unwrap() - 0.3).abs() < 1e-15);
        let ties = vec![m(0.3, 0.3); 4];
        assert_eq!(ns(&ties).unwrap(), 0.0);
        assert_eq!(nm(&ties).unwrap(), 0.0);
        assert!((nm(&[m(0.4, 0.1), m(0.2, 0.2)]).unwrap() - 0.15).abs() < 1e-15);
        assert!(ns(&[]).is_err() && nm(&[]).is_err() && mean_nkl(&[]).is_err());
    }

    #[test]
    fn kl_basics() {
        let p = NextTokenDistribution { probs: vec![0.5, 0.5] };
        let q = NextTokenDistribution { probs: vec![0.25, 0.75] };
        let want = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((nkl(&p, &q).unwrap() - want).abs() < 1e-15);
        assert_eq!(nkl(&p, &p).unwrap(), 0.0);
        let zero = NextTokenDistribution { probs: vec![1.0, 0.0] };
        assert!((nkl(&zero, &p).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(nkl(&p, &zero).unwrap().is_finite());
        assert!(nkl(&p, &NextTokenDistribution { probs: vec![1.0] }).is_err());
    }
}
