//! Central finite-difference checks for the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{FinalTokenNll, Intervention, MlpGrads};
use super::params::Checkpoint;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-3;

/// Relative error with an absolute floor so coordinates whose true gradient
/// is near zero are judged on absolute error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub target: String,
    pub coordinates: usize,
    pub max_relative_error: f64,
    pub worst_coordinate: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < FD_TOLERANCE
    }
}

fn summarize(target: String, pairs: &[(usize, f64, f64)]) -> GradCheckReport {
    let mut worst = (0, 0.0);
    for &(i, a, n) in pairs {
        let e = relative_error(a, n);
        if e > worst.1 || e.is_nan() {
            worst = (i, e);
        }
    }
    GradCheckReport {
        target,
        coordinates: pairs.len(),
        max_relative_error: worst.1,
        worst_coordinate: worst.0,
    }
}

/// Checks a hidden-state gradient function against central differences of
/// the loss as the MLP output at (layer, position) is perturbed.
pub fn check_hidden_with<F>(
    ckpt: &Checkpoint,
    tokens: &[u32],
    layer: usize,
    position: usize,
    loss: FinalTokenNll,
    coords: usize,
    seed: u64,
    grad_fn: F,
) -> Result<GradCheckReport>
where
    F: Fn(&Checkpoint, &[u32], usize, usize, FinalTokenNll) -> Result<Vec<f64>>,
{
    let analytic = grad_fn(ckpt, tokens, layer, position, loss)?;
    let base = ckpt.forward_traced(tokens)?.site(layer, position).value.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(coords);
    for _ in 0..coords {
        let i = rng.random_range(0..base.len());
        let mut iv = Intervention { layer, position, value: base.clone() };
        iv.value[i] = base[i] + FD_STEP;
        let plus = ckpt.final_token_loss(tokens, loss, Some(&iv))?;
        iv.value[i] = base[i] - FD_STEP;
        let minus = ckpt.final_token_loss(tokens, loss, Some(&iv))?;
        pairs.push((i, analytic[i], (plus - minus) / (2.0 * FD_STEP)));
    }
    Ok(summarize(format!("hidden[layer {layer}, pos {position}]"), &pairs))
}

pub fn check_hidden(
    ckpt: &Checkpoint,
    tokens: &[u32],
    layer: usize,
    position: usize,
    loss: FinalTokenNll,
    coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    check_hidden_with(ckpt, tokens, layer, position, loss, coords, seed, |c, t, l, p, loss| {
        Ok(c.grad_wrt_hidden(t, l, p, loss)?.grad)
    })
}

const MLP_PARTS: [&str; 4] = ["w_in", "b_in", "w_out", "b_out"];

fn mlp_part(g: &MlpGrads, part: usize) -> &[f64] {
    match part {
        0 => &g.w_in,
        1 => &g.b_in,
        2 => &g.w_out,
        _ => &g.b_out,
    }
}

fn mlp_param_mut(c: &mut Checkpoint, layer: usize, part: usize) -> &mut Vec<f32> {
    let lp = &mut c.layers[layer];
    match part {
        0 => &mut lp.w_in,
        1 => &mut lp.b_in,
        2 => &mut lp.w_out,
        _ => &mut lp.b_out,
    }
}

/// Checks an MLP-weight gradient function against central differences over
/// randomly chosen coordinates of the four MLP blocks of `layer`. The
/// perturbation uses the step actually representable in `f32`.
pub fn check_mlp_with<F>(
    ckpt: &Checkpoint,
    tokens: &[u32],
    layer: usize,
    loss: FinalTokenNll,
    coords: usize,
    seed: u64,
    grad_fn: F,
) -> Result<GradCheckReport>
where
    F: Fn(&Checkpoint, &[u32], usize, FinalTokenNll) -> Result<MlpGrads>,
{
    let analytic = grad_fn(ckpt, tokens, layer, loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (0..4).map(|p| mlp_part(&analytic, p).len()).collect();
    let total: usize = sizes.iter().sum();
    let mut work = ckpt.clone();
    let mut pairs = Vec::with_capacity(coords);
    for _ in 0..coords {
        let mut flat = rng.random_range(0..total);
        let mut part = 0;
        while flat >= sizes[part] {
            flat -= sizes[part];
            part += 1;
        }
        let orig = mlp_param_mut(&mut work, layer, part)[flat];
        let up = (orig as f64 + FD_STEP) as f32;
        let down = (orig as f64 - FD_STEP) as f32;
        mlp_param_mut(&mut work, layer, part)[flat] = up;
        let plus = work.final_token_loss(tokens, loss, None)?;
        mlp_param_mut(&mut work, layer, part)[flat] = down;
        let minus = work.final_token_loss(tokens, loss, None)?;
        mlp_param_mut(&mut work, layer, part)[flat] = orig;
        let numeric = (plus - minus) / (up as f64 - down as f64);
        let id = sizes[..part].iter().sum::<usize>() + flat;
        pairs.push((id, mlp_part(&analytic, part)[flat], numeric));
    }
    Ok(summarize(format!("mlp[layer {layer}] ({})", MLP_PARTS.join(",")), &pairs))
}

pub fn check_mlp(
    ckpt: &Checkpoint,
    tokens: &[u32],
    layer: usize,
    loss: FinalTokenNll,
    coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    check_mlp_with(ckpt, tokens, layer, loss, coords, seed, |c, t, l, loss| {
        c.grad_wrt_mlp_weights(t, l, loss)
    })
}
