//! Gradient descent on the MLP output at the subject's last token.

use serde::{Deserialize, Serialize};

use super::key::locate_subject;
use super::params::EditorParams;
use super::request::RewriteRequest;
use crate::error::{Error, Result};
use crate::tinylm::{Checkpoint, FinalTokenNll, Intervention};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSolution {
    pub value: Vec<f64>,
    pub initial: Vec<f64>,
    /// Gradient evaluations after the initial one, accepted or not.
    pub iterations: usize,
    /// Loss of every accepted iterate, starting with the initial value.
    pub losses: Vec<f64>,
    pub final_loss: f64,
    pub target_prob: f64,
    pub converged: bool,
}

pub fn solve_value(ckpt: &Checkpoint, request: &RewriteRequest, layer: usize, params: &EditorParams) -> Result<ValueSolution> {
    let site = locate_subject(ckpt, request, "")?;
    let target = ckpt.tokenizer.object_first_token(&request.target_new)?;
    let loss = FinalTokenNll { target };
    let pos = site.subject_position;
    let trace = ckpt.forward_traced(&site.tokens)?;
    let initial = trace.site(layer, pos).value.clone();

    let eval = |v: &[f64]| {
        let iv = Intervention { layer, position: pos, value: v.to_vec() };
        ckpt.grad_wrt_hidden_intervened(&site.tokens, layer, pos, loss, Some(&iv))
    };
    let mut v = initial.clone();
    let mut g = eval(&v)?;
    if !g.loss.is_finite() {
        return Err(Error::Edit("non-finite value loss".into()));
    }
    let mut losses = vec![g.loss];
    // steps are relative to the size of the value being replaced
    let scale = initial.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let mut step = params.value_step * scale;
    let mut iterations = 0;
    let mut converged = (-g.loss).exp() >= params.value_stop_prob;
    while !converged && iterations < params.value_max_steps {
        iterations += 1;
        let gnorm = g.grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm == 0.0 {
            break;
        }
        let cand: Vec<f64> = v.iter().zip(&g.grad).map(|(x, d)| x - step * d / gnorm).collect();
        let gc = eval(&cand)?;
        if gc.loss.is_finite() && gc.loss <= g.loss {
            v = cand;
            g = gc;
            losses.push(g.loss);
            converged = (-g.loss).exp() >= params.value_stop_prob;
        } else {
            step *= 0.5;
        }
    }
    Ok(ValueSolution {
        value: v,
        initial,
        iterations,
        final_loss: g.loss,
        target_prob: (-g.loss).exp(),
        losses,
        converged,
    })
}
