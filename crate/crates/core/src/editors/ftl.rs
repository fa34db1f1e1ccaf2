//! Fine-tuning one layer's output projection inside an L∞ box.

use super::key::locate_subject;
use super::outcome::{EditDiagnostics, EditOutcome, FineTuneTrace};
use super::params::{EditorKind, EditorParams};
use super::request::RewriteRequest;
use crate::error::{Error, Result};
use crate::tinylm::{Checkpoint, FinalTokenNll};

/// Clamps `w` to `[w0 - eps, w0 + eps]`, measured in f64 after rounding
/// to f32.
pub fn project_linf(w: f64, w0: f32, eps: f64) -> f32 {
    let c = w0 as f64;
    let mut x = w.clamp(c - eps, c + eps) as f32;
    while (x as f64 - c).abs() > eps {
        x = if (x as f64) > c { x.next_down() } else { x.next_up() };
    }
    x
}

pub fn ftl_edit(ckpt: &Checkpoint, request: &RewriteRequest, params: &EditorParams) -> Result<EditOutcome> {
    request.validate()?;
    params.validate(&ckpt.config)?;
    let layer = params.layer;
    let site = locate_subject(ckpt, request, "")?;
    let loss = FinalTokenNll { target: ckpt.tokenizer.object_first_token(&request.target_new)? };
    let (eps, lr) = (params.ftl_epsilon, params.ftl_learning_rate);
    let w0 = ckpt.layers[layer].w_out.clone();

    let mut post = ckpt.clone();
    let mut losses = Vec::with_capacity(params.ftl_steps + 1);
    for _ in 0..params.ftl_steps {
        let g = post.grad_wrt_mlp_weights(&site.tokens, layer, loss)?;
        if !g.loss.is_finite() {
            return Err(Error::Edit("non-finite fine-tuning loss".into()));
        }
        losses.push(g.loss);
        let lp = &mut post.layers[layer];
        for ((x, x0), d) in lp.w_out.iter_mut().zip(&w0).zip(&g.w_out) {
            *x = project_linf(*x as f64 - lr * d, *x0, eps);
        }
    }
    let last = post.final_token_loss(&site.tokens, loss, None)?;
    if !last.is_finite() {
        return Err(Error::Edit("non-finite fine-tuning loss".into()));
    }
    losses.push(last);

    let lp = &post.layers[layer];
    let max_abs_delta = lp
        .w_out
        .iter()
        .zip(&w0)
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .fold(0.0, f64::max);
    let diagnostics = EditDiagnostics {
        rank_one: vec![],
        fine_tune: Some(FineTuneTrace { layer, losses, max_abs_delta }),
    };
    Ok(EditOutcome::new(EditorKind::FtL, ckpt, post, vec![layer], diagnostics))
}
