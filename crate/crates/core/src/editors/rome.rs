//! Rank-one update of a single layer's `W_out`.

use std::collections::BTreeMap;

use super::key::{collect_key, estimate_covariance, sample_prefixes, Covariance};
use super::outcome::{norm, EditDiagnostics, EditOutcome, RankOneStep};
use super::params::{EditorKind, EditorParams};
use super::request::RewriteRequest;
use super::value::solve_value;
use crate::error::{Error, Result};
use crate::tinylm::Checkpoint;

/// Corpus-derived statistics shared by every edit of one checkpoint.
#[derive(Debug, Clone)]
pub struct EditContext {
    pub corpus: Vec<String>,
    pub covariances: BTreeMap<usize, Covariance>,
}

impl EditContext {
    /// Estimates covariances for the layers `params` may edit from the
    /// unedited model.
    pub fn prepare<S: AsRef<str>>(ckpt: &Checkpoint, corpus: &[S], params: &EditorParams) -> Result<Self> {
        let corpus: Vec<String> = corpus.iter().map(|s| s.as_ref().to_string()).collect();
        let mut covariances = BTreeMap::new();
        if matches!(params.kind, EditorKind::Rome | EditorKind::MemitLite) {
            let seqs: Vec<Vec<u32>> = corpus.iter().map(|s| ckpt.tokenizer.encode(s)).collect();
            for l in params.layers() {
                covariances.insert(l, estimate_covariance(ckpt, &seqs, l, params.ridge)?);
            }
        }
        Ok(Self { corpus, covariances })
    }

    pub fn covariance(&self, layer: usize) -> Result<&Covariance> {
        self.covariances
            .get(&layer)
            .ok_or_else(|| Error::Edit(format!("no covariance prepared for layer {layer}")))
    }

    pub fn prefixes(&self, params: &EditorParams) -> Vec<String> {
        sample_prefixes(&self.corpus, params.n_prefix, params.prefix_seed)
    }
}

/// `delta W = r (C^-1 k)^T / ((C^-1 k)^T k)` in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneUpdate {
    pub residual: Vec<f64>,
    pub direction: Vec<f64>,
    pub denominator: f64,
}

impl RankOneUpdate {
    /// `residual = scale * (v - (W k + b))`, `w` row-major `[d_out x d_in]`.
    pub fn compute(w: &[f32], b: &[f32], key: &[f64], value: &[f64], cov: &Covariance, scale: f64, tol: f64) -> Result<Self> {
        let (d_out, d_in) = (value.len(), key.len());
        if w.len() != d_out * d_in || b.len() != d_out || cov.dim() != d_in {
            return Err(Error::Edit("rank-one update shape mismatch".into()));
        }
        let ck = cov.solve(key);
        let denominator: f64 = ck.iter().zip(key).map(|(a, b)| a * b).sum();
        if !denominator.is_finite() || denominator.abs() < tol {
            return Err(Error::DegenerateKey(denominator));
        }
        let residual = (0..d_out)
            .map(|i| {
                let row = &w[i * d_in..(i + 1) * d_in];
                let wk: f64 = b[i] as f64 + row.iter().zip(key).map(|(w, k)| *w as f64 * k).sum::<f64>();
                scale * (value[i] - wk)
            })
            .collect();
        let direction = ck.iter().map(|c| c / denominator).collect();
        Ok(Self { residual, direction, denominator })
    }

    pub fn apply(&self, w: &mut [f32]) {
        let d_in = self.direction.len();
        for (i, r) in self.residual.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            for (x, u) in w[i * d_in..(i + 1) * d_in].iter_mut().zip(&self.direction) {
                *x = (*x as f64 + r * u) as f32;
            }
        }
    }
}

/// One rank-one step at `layer` on `model` in place, applying
/// `1 / remaining` of the residual.
pub(crate) fn rank_one_step(
    model: &mut Checkpoint,
    request: &RewriteRequest,
    layer: usize,
    params: &EditorParams,
    ctx: &EditContext,
    remaining: usize,
) -> Result<RankOneStep> {
    model.check_layer(layer)?;
    let prefixes = ctx.prefixes(params);
    let key = collect_key(model, request, layer, &prefixes)?;
    let sol = solve_value(model, request, layer, params)?;
    let scale = 1.0 / remaining as f64;
    let lp = &model.layers[layer];
    let upd = RankOneUpdate::compute(&lp.w_out, &lp.b_out, &key, &sol.value, ctx.covariance(layer)?, scale, params.degenerate_tol)?;
    upd.apply(&mut model.layers[layer].w_out);
    Ok(RankOneStep {
        layer,
        key_norm: norm(&key),
        value_norm: norm(&sol.value),
        residual_norm: norm(&upd.residual),
        residual_scale: scale,
        denominator: upd.denominator,
        value_iterations: sol.iterations,
        value_loss: sol.final_loss,
        value_prob: sol.target_prob,
        value_converged: sol.converged,
        key,
        value: sol.value,
    })
}

pub fn rome_edit(ckpt: &Checkpoint, request: &RewriteRequest, params: &EditorParams, ctx: &EditContext) -> Result<EditOutcome> {
    request.validate()?;
    params.validate(&ckpt.config)?;
    let mut post = ckpt.clone();
    let step = rank_one_step(&mut post, request, params.layer, params, ctx, 1)?;
    let diagnostics = EditDiagnostics { rank_one: vec![step], fine_tune: None };
    Ok(EditOutcome::new(EditorKind::Rome, ckpt, post, vec![params.layer], diagnostics))
}
