use serde::{Deserialize, Serialize};

use super::outcome::EditOutcome;
use super::request::RewriteRequest;
use crate::error::Result;

/// First-token probabilities of both targets on the filled template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyReport {
    pub p_pre_true: f64,
    pub p_pre_new: f64,
    pub p_post_true: f64,
    pub p_post_new: f64,
    pub success: bool,
}

pub fn efficacy_check(outcome: &EditOutcome, request: &RewriteRequest) -> Result<EfficacyReport> {
    let tok = &outcome.pre.tokenizer;
    let prompt = tok.encode(&request.filled_prompt()?);
    let t_true = tok.object_first_token(&request.target_true)?;
    let t_new = tok.object_first_token(&request.target_new)?;
    let pre = outcome.pre.forward(&prompt)?;
    let post = outcome.post.forward(&prompt)?;
    let p_post_new = post.prob(t_new);
    let p_post_true = post.prob(t_true);
    Ok(EfficacyReport {
        p_pre_true: pre.prob(t_true),
        p_pre_new: pre.prob(t_new),
        p_post_true,
        p_post_new,
        success: p_post_new > p_post_true,
    })
}
