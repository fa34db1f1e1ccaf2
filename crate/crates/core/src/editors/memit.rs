//! Single-edit spreading over a contiguous range of layers.

use super::outcome::{EditDiagnostics, EditOutcome};
use super::params::{EditorKind, EditorParams};
use super::request::RewriteRequest;
use super::rome::{rank_one_step, EditContext};
use crate::error::Result;
use crate::tinylm::Checkpoint;

/// For each layer, lowest first: solve key and value on the partially
/// edited model and apply `1 / (layers left)` of the residual.
pub fn memit_lite_edit(ckpt: &Checkpoint, request: &RewriteRequest, params: &EditorParams, ctx: &EditContext) -> Result<EditOutcome> {
    request.validate()?;
    params.validate(&ckpt.config)?;
    let mut post = ckpt.clone();
    let layers: Vec<usize> = (params.layer_lo..=params.layer_hi).collect();
    let mut steps = Vec::with_capacity(layers.len());
    for (i, &l) in layers.iter().enumerate() {
        steps.push(rank_one_step(&mut post, request, l, params, ctx, layers.len() - i)?);
    }
    let diagnostics = EditDiagnostics { rank_one: steps, fine_tune: None };
    Ok(EditOutcome::new(EditorKind::MemitLite, ckpt, post, layers, diagnostics))
}
