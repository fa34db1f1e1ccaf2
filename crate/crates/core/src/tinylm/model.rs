//! Forward pass, activation tracing and reverse-mode gradients.
//!
//! Parameters are `f32`; every activation, reduction and gradient is `f64`.
//! All loops run in a fixed order on the calling thread, so results are
//! bit-identical regardless of how many threads call in.

use super::params::{Checkpoint, LAYER_BLOCKS};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Probability vector over the vocabulary at the final position.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    pub probs: Vec<f64>,
}

impl NextTokenDistribution {
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        Self { probs }
    }

    pub fn prob(&self, id: u32) -> f64 {
        self.probs[id as usize]
    }

    /// Index of the largest probability; the lowest id wins ties.
    pub fn argmax(&self) -> u32 {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as u32
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Replaces the MLP output at one (layer, position) site with a fixed vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    pub layer: usize,
    pub position: usize,
    pub value: Vec<f64>,
}

/// Negative log probability of `target` at the final position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FinalTokenNll {
    pub target: u32,
}

/// MLP activations at one (layer, position).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSite {
    /// Normalized residual fed to `w_in` (`d_model`).
    pub mlp_input: Vec<f64>,
    /// Post-GeLU hidden fed to `w_out` (`d_mlp`); the key side of the memory.
    pub key: Vec<f64>,
    /// MLP output added to the residual stream (`d_model`); the value side.
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// `sites[layer][position]`
    pub sites: Vec<Vec<MlpSite>>,
    pub final_logits: Vec<f64>,
}

impl TraceRecord {
    pub fn site(&self, layer: usize, position: usize) -> &MlpSite {
        &self.sites[layer][position]
    }

    pub fn site_count(&self) -> usize {
        self.sites.iter().map(Vec::len).sum()
    }

    pub fn distribution(&self) -> NextTokenDistribution {
        NextTokenDistribution::from_logits(&self.final_logits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Gradients of one layer's MLP blocks, same layouts as [`super::LayerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub loss: f64,
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

/// Gradients for every block, in [`Checkpoint::blocks`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub blocks: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros(ckpt: &Checkpoint) -> Self {
        Self {
            blocks: Checkpoint::block_shapes(&ckpt.config)
                .into_iter()
                .map(|n| vec![0.0; n])
                .collect(),
        }
    }

    pub fn layer_block_index(layer: usize, name: &str) -> usize {
        let offset = LAYER_BLOCKS
            .iter()
            .position(|n| *n == name)
            .expect("known layer block");
        2 + LAYER_BLOCKS.len() * layer + offset
    }

    pub fn layer_block(&self, layer: usize, name: &str) -> &[f64] {
        &self.blocks[Self::layer_block_index(layer, name)]
    }

    fn layer_block_mut(&mut self, layer: usize, name: &str) -> &mut Vec<f64> {
        &mut self.blocks[Self::layer_block_index(layer, name)]
    }

    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// dense helpers
// ---------------------------------------------------------------------------

/// `out = W x` for row-major `W[rows][cols]`.
fn matvec(w: &[f32], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = dot_f32(row, x);
    }
}

/// Four interleaved partial sums, combined in a fixed order.
fn dot_f32(a: &[f32], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() / 4 * 4);
    let (cb, rb) = b[..a.len()].split_at(ca.len());
    for (qa, qb) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for i in 0..4 {
            acc[i] += qa[i] as f64 * qb[i];
        }
    }
    let mut tail = 0.0;
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x as f64 * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `dx += Wᵀ dy`.
fn matvec_t_acc(w: &[f32], cols: usize, dy: &[f64], dx: &mut [f64]) {
    for (row, &g) in w.chunks_exact(cols).zip(dy) {
        if g == 0.0 {
            continue;
        }
        for (d, &wi) in dx.iter_mut().zip(row) {
            *d += wi as f64 * g;
        }
    }
}

/// `gw += dy ⊗ x`.
fn outer_acc(gw: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    for (row, &g) in gw.chunks_exact_mut(cols).zip(dy) {
        if g == 0.0 {
            continue;
        }
        for (r, &xi) in row.iter_mut().zip(x) {
            *r += g * xi;
        }
    }
}

fn layer_norm(x: &[f64], g: &[f32], b: &[f32], xhat: &mut [f64], y: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        xhat[i] = (x[i] - mean) * rstd;
        y[i] = xhat[i] * g[i] as f64 + b[i] as f64;
    }
    rstd
}

/// Accumulates input gradient into `dx`; parameter grads into `dg`/`db` if given.
fn layer_norm_backward(
    dy: &[f64],
    xhat: &[f64],
    rstd: f64,
    g: &[f32],
    dx: &mut [f64],
    dparams: Option<(&mut [f64], &mut [f64])>,
) {
    let n = dy.len();
    if let Some((dg, db)) = dparams {
        for i in 0..n {
            dg[i] += dy[i] * xhat[i];
            db[i] += dy[i];
        }
    }
    let mut mean_d = 0.0;
    let mut mean_dx = 0.0;
    for i in 0..n {
        let d = dy[i] * g[i] as f64;
        mean_d += d;
        mean_dx += d * xhat[i];
    }
    mean_d /= n as f64;
    mean_dx /= n as f64;
    for i in 0..n {
        let d = dy[i] * g[i] as f64;
        dx[i] += rstd * (d - mean_d - xhat[i] * mean_dx);
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

// ---------------------------------------------------------------------------
// forward with cache
// ---------------------------------------------------------------------------

struct LayerCache {
    xhat1: Vec<f64>,
    rstd1: Vec<f64>,
    a1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `[head][query][key]`, zero above the diagonal
    att: Vec<f64>,
    ctx: Vec<f64>,
    xhat2: Vec<f64>,
    rstd2: Vec<f64>,
    m: Vec<f64>,
    h_pre: Vec<f64>,
    g: Vec<f64>,
    mlp_out: Vec<f64>,
}

struct ForwardCache {
    len: usize,
    layers: Vec<LayerCache>,
    xhatf: Vec<f64>,
    rstdf: Vec<f64>,
    xf: Vec<f64>,
    intervention: Option<(usize, usize)>,
}

impl Checkpoint {
    pub fn validate_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() || tokens.len() > self.config.max_seq_len {
            return Err(Error::SequenceLength {
                len: tokens.len(),
                max: self.config.max_seq_len,
            });
        }
        if let Some(&id) = tokens.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::TokenId {
                id,
                vocab: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn check_intervention(&self, tokens: &[u32], iv: &Intervention) -> Result<()> {
        self.check_layer(iv.layer)?;
        if iv.position >= tokens.len() {
            return Err(Error::Index(format!(
                "position {} >= sequence length {}",
                iv.position,
                tokens.len()
            )));
        }
        if iv.value.len() != self.config.d_model {
            return Err(Error::Index(format!(
                "intervention value has {} entries, d_model is {}",
                iv.value.len(),
                self.config.d_model
            )));
        }
        Ok(())
    }

    fn run_forward(&self, tokens: &[u32], iv: Option<&Intervention>) -> Result<ForwardCache> {
        self.validate_tokens(tokens)?;
        if let Some(iv) = iv {
            self.check_intervention(tokens, iv)?;
        }
        let cfg = &self.config;
        let (t, d, m, h) = (tokens.len(), cfg.d_model, cfg.d_mlp, cfg.n_heads);
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        let mut x = vec![0.0; t * d];
        for (p, &tok) in tokens.iter().enumerate() {
            let te = &self.tok_emb[tok as usize * d..(tok as usize + 1) * d];
            let pe = &self.pos_emb[p * d..(p + 1) * d];
            for i in 0..d {
                x[p * d + i] = te[i] as f64 + pe[i] as f64;
            }
        }

        let mut layers = Vec::with_capacity(cfg.n_layers);
        for (l, lp) in self.layers.iter().enumerate() {
            let mut xhat1 = vec![0.0; t * d];
            let mut a1 = vec![0.0; t * d];
            let mut rstd1 = vec![0.0; t];
            for p in 0..t {
                let r = p * d..(p + 1) * d;
                rstd1[p] = layer_norm(&x[r.clone()], &lp.ln1_g, &lp.ln1_b, &mut xhat1[r.clone()], &mut a1[r]);
            }
            let mut q = vec![0.0; t * d];
            let mut k = vec![0.0; t * d];
            let mut v = vec![0.0; t * d];
            for p in 0..t {
                let r = p * d..(p + 1) * d;
                matvec(&lp.wq, d, &a1[r.clone()], &mut q[r.clone()]);
                matvec(&lp.wk, d, &a1[r.clone()], &mut k[r.clone()]);
                matvec(&lp.wv, d, &a1[r.clone()], &mut v[r]);
            }
            let mut att = vec![0.0; h * t * t];
            let mut ctx = vec![0.0; t * d];
            for head in 0..h {
                let off = head * hd;
                for i in 0..t {
                    let row = &mut att[(head * t + i) * t..(head * t + i + 1) * t];
                    let qi = &q[i * d + off..i * d + off + hd];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..=i {
                        let kj = &k[j * d + off..j * d + off + hd];
                        let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                        row[j] = s;
                        max = max.max(s);
                    }
                    let mut sum = 0.0;
                    for s in row.iter_mut().take(i + 1) {
                        *s = (*s - max).exp();
                        sum += *s;
                    }
                    for s in row.iter_mut().take(i + 1) {
                        *s /= sum;
                    }
                    let c = &mut ctx[i * d + off..i * d + off + hd];
                    for j in 0..=i {
                        let pij = row[j];
                        let vj = &v[j * d + off..j * d + off + hd];
                        for (ci, &vv) in c.iter_mut().zip(vj) {
                            *ci += pij * vv;
                        }
                    }
                }
            }
            let mut tmp = vec![0.0; d];
            for p in 0..t {
                matvec(&lp.wo, d, &ctx[p * d..(p + 1) * d], &mut tmp);
                for i in 0..d {
                    x[p * d + i] += tmp[i];
                }
            }

            let mut xhat2 = vec![0.0; t * d];
            let mut mm = vec![0.0; t * d];
            let mut rstd2 = vec![0.0; t];
            let mut h_pre = vec![0.0; t * m];
            let mut g = vec![0.0; t * m];
            let mut mlp_out = vec![0.0; t * d];
            for p in 0..t {
                let r = p * d..(p + 1) * d;
                rstd2[p] = layer_norm(&x[r.clone()], &lp.ln2_g, &lp.ln2_b, &mut xhat2[r.clone()], &mut mm[r.clone()]);
                let hr = p * m..(p + 1) * m;
                matvec(&lp.w_in, d, &mm[r.clone()], &mut h_pre[hr.clone()]);
                for j in hr.clone() {
                    h_pre[j] += lp.b_in[j - p * m] as f64;
                    g[j] = gelu(h_pre[j]);
                }
                let out = &mut mlp_out[r.clone()];
                match iv {
                    Some(iv) if iv.layer == l && iv.position == p => out.copy_from_slice(&iv.value),
                    _ => {
                        matvec(&lp.w_out, m, &g[hr], out);
                        for (o, &b) in out.iter_mut().zip(&lp.b_out) {
                            *o += b as f64;
                        }
                    }
                }
                for i in r {
                    x[i] += mlp_out[i];
                }
            }
            layers.push(LayerCache {
                xhat1,
                rstd1,
                a1,
                q,
                k,
                v,
                att,
                ctx,
                xhat2,
                rstd2,
                m: mm,
                h_pre,
                g,
                mlp_out,
            });
        }

        let mut xhatf = vec![0.0; t * d];
        let mut xf = vec![0.0; t * d];
        let mut rstdf = vec![0.0; t];
        for p in 0..t {
            let r = p * d..(p + 1) * d;
            rstdf[p] = layer_norm(&x[r.clone()], &self.lnf_g, &self.lnf_b, &mut xhatf[r.clone()], &mut xf[r]);
        }
        Ok(ForwardCache {
            len: t,
            layers,
            xhatf,
            rstdf,
            xf,
            intervention: iv.map(|iv| (iv.layer, iv.position)),
        })
    }

    fn logits_at(&self, cache: &ForwardCache, pos: usize) -> Vec<f64> {
        let d = self.config.d_model;
        let mut logits = vec![0.0; self.config.vocab_size];
        matvec(&self.unembed, d, &cache.xf[pos * d..(pos + 1) * d], &mut logits);
        logits
    }

    /// Backpropagates `seeds` (position, dL/dlogits). Returns parameter grads
    /// when requested, and the gradient with respect to the residual stream
    /// after each layer (equivalently, w.r.t. each MLP output).
    fn run_backward(
        &self,
        tokens: &[u32],
        cache: &ForwardCache,
        seeds: &[(usize, Vec<f64>)],
        mut grads: Option<&mut ParamGrads>,
    ) -> Vec<Vec<f64>> {
        let cfg = &self.config;
        let (t, d, m, h) = (cache.len, cfg.d_model, cfg.d_mlp, cfg.n_heads);
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let n_blocks = Checkpoint::block_shapes(cfg).len();

        let mut dxf = vec![0.0; t * d];
        for (pos, dlogits) in seeds {
            let r = pos * d..(pos + 1) * d;
            matvec_t_acc(&self.unembed, d, dlogits, &mut dxf[r.clone()]);
            if let Some(g) = grads.as_deref_mut() {
                outer_acc(&mut g.blocks[n_blocks - 1], d, dlogits, &cache.xf[r]);
            }
        }
        let mut dx = vec![0.0; t * d];
        for p in 0..t {
            let r = p * d..(p + 1) * d;
            let params = grads.as_deref_mut().map(|g| {
                let (head, tail) = g.blocks.split_at_mut(n_blocks - 2);
                (&mut head[n_blocks - 3][..], &mut tail[0][..])
            });
            layer_norm_backward(&dxf[r.clone()], &cache.xhatf[r.clone()], cache.rstdf[p], &self.lnf_g, &mut dx[r], params);
        }

        let mut resid = vec![Vec::new(); cfg.n_layers];
        for l in (0..cfg.n_layers).rev() {
            let lp = &self.layers[l];
            let lc = &cache.layers[l];
            resid[l] = dx.clone();

            // MLP
            let mut dmid = dx.clone();
            let mut dg = vec![0.0; m];
            let mut dm = vec![0.0; d];
            for p in 0..t {
                if cache.intervention == Some((l, p)) {
                    continue;
                }
                let r = p * d..(p + 1) * d;
                let hr = p * m..(p + 1) * m;
                let dout = &dx[r.clone()];
                if let Some(g) = grads.as_deref_mut() {
                    outer_acc(g.layer_block_mut(l, "w_out"), m, dout, &lc.g[hr.clone()]);
                    for (b, &v) in g.layer_block_mut(l, "b_out").iter_mut().zip(dout) {
                        *b += v;
                    }
                }
                dg.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_acc(&lp.w_out, m, dout, &mut dg);
                for (j, v) in dg.iter_mut().enumerate() {
                    *v *= gelu_grad(lc.h_pre[p * m + j]);
                }
                if let Some(g) = grads.as_deref_mut() {
                    outer_acc(g.layer_block_mut(l, "w_in"), d, &dg, &lc.m[r.clone()]);
                    for (b, &v) in g.layer_block_mut(l, "b_in").iter_mut().zip(&dg) {
                        *b += v;
                    }
                }
                dm.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_acc(&lp.w_in, d, &dg, &mut dm);
                let params = grads.as_deref_mut().map(|g| {
                    let gi = ParamGrads::layer_block_index(l, "ln2_g");
                    let (a, b) = g.blocks.split_at_mut(gi + 1);
                    (&mut a[gi][..], &mut b[0][..])
                });
                layer_norm_backward(&dm, &lc.xhat2[r.clone()], lc.rstd2[p], &lp.ln2_g, &mut dmid[r], params);
            }

            // attention
            let mut dx_in = dmid.clone();
            let mut dctx = vec![0.0; t * d];
            for p in 0..t {
                let r = p * d..(p + 1) * d;
                if let Some(g) = grads.as_deref_mut() {
                    outer_acc(g.layer_block_mut(l, "wo"), d, &dmid[r.clone()], &lc.ctx[r.clone()]);
                }
                matvec_t_acc(&lp.wo, d, &dmid[r.clone()], &mut dctx[r]);
            }
            let mut dq = vec![0.0; t * d];
            let mut dk = vec![0.0; t * d];
            let mut dv = vec![0.0; t * d];
            let mut dp = vec![0.0; t];
            for head in 0..h {
                let off = head * hd;
                for i in 0..t {
                    let row = &lc.att[(head * t + i) * t..(head * t + i + 1) * t];
                    let dci = &dctx[i * d + off..i * d + off + hd];
                    let mut dot = 0.0;
                    for j in 0..=i {
                        let vj = &lc.v[j * d + off..j * d + off + hd];
                        dp[j] = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                        dot += row[j] * dp[j];
                        for (dvv, &c) in dv[j * d + off..j * d + off + hd].iter_mut().zip(dci) {
                            *dvv += row[j] * c;
                        }
                    }
                    for j in 0..=i {
                        let ds = row[j] * (dp[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for x in 0..hd {
                            dq[i * d + off + x] += ds * lc.k[j * d + off + x];
                            dk[j * d + off + x] += ds * lc.q[i * d + off + x];
                        }
                    }
                }
            }
            let mut da = vec![0.0; d];
            for p in 0..t {
                let r = p * d..(p + 1) * d;
                if let Some(g) = grads.as_deref_mut() {
                    outer_acc(g.layer_block_mut(l, "wq"), d, &dq[r.clone()], &lc.a1[r.clone()]);
                    outer_acc(g.layer_block_mut(l, "wk"), d, &dk[r.clone()], &lc.a1[r.clone()]);
                    outer_acc(g.layer_block_mut(l, "wv"), d, &dv[r.clone()], &lc.a1[r.clone()]);
                }
                da.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_acc(&lp.wq, d, &dq[r.clone()], &mut da);
                matvec_t_acc(&lp.wk, d, &dk[r.clone()], &mut da);
                matvec_t_acc(&lp.wv, d, &dv[r.clone()], &mut da);
                let params = grads.as_deref_mut().map(|g| {
                    let gi = ParamGrads::layer_block_index(l, "ln1_g");
                    let (a, b) = g.blocks.split_at_mut(gi + 1);
                    (&mut a[gi][..], &mut b[0][..])
                });
                layer_norm_backward(&da, &lc.xhat1[r.clone()], lc.rstd1[p], &lp.ln1_g, &mut dx_in[r], params);
            }
            dx = dx_in;
        }

        if let Some(g) = grads {
            for (p, &tok) in tokens.iter().enumerate() {
                let tr = tok as usize * d..(tok as usize + 1) * d;
                for (e, &v) in g.blocks[0][tr].iter_mut().zip(&dx[p * d..(p + 1) * d]) {
                    *e += v;
                }
                for (e, &v) in g.blocks[1][p * d..(p + 1) * d].iter_mut().zip(&dx[p * d..(p + 1) * d]) {
                    *e += v;
                }
            }
        }
        resid
    }

    fn nll_seed(&self, cache: &ForwardCache, target: u32) -> Result<(f64, Vec<f64>)> {
        if target as usize >= self.config.vocab_size {
            return Err(Error::TokenId {
                id: target,
                vocab: self.config.vocab_size,
            });
        }
        let logits = self.logits_at(cache, cache.len - 1);
        let dist = NextTokenDistribution::from_logits(&logits);
        let loss = -dist.prob(target).ln();
        let mut dlogits = dist.probs;
        dlogits[target as usize] -= 1.0;
        Ok((loss, dlogits))
    }

    // -----------------------------------------------------------------------
    // public surface
    // -----------------------------------------------------------------------

    pub fn forward(&self, tokens: &[u32]) -> Result<NextTokenDistribution> {
        let cache = self.run_forward(tokens, None)?;
        Ok(NextTokenDistribution::from_logits(&self.logits_at(&cache, cache.len - 1)))
    }

    pub fn forward_intervened(&self, tokens: &[u32], iv: &Intervention) -> Result<NextTokenDistribution> {
        let cache = self.run_forward(tokens, Some(iv))?;
        Ok(NextTokenDistribution::from_logits(&self.logits_at(&cache, cache.len - 1)))
    }

    pub fn forward_traced(&self, tokens: &[u32]) -> Result<TraceRecord> {
        let cache = self.run_forward(tokens, None)?;
        let (d, m) = (self.config.d_model, self.config.d_mlp);
        let sites = cache
            .layers
            .iter()
            .map(|lc| {
                (0..cache.len)
                    .map(|p| MlpSite {
                        mlp_input: lc.m[p * d..(p + 1) * d].to_vec(),
                        key: lc.g[p * m..(p + 1) * m].to_vec(),
                        value: lc.mlp_out[p * d..(p + 1) * d].to_vec(),
                    })
                    .collect()
            })
            .collect();
        Ok(TraceRecord {
            sites,
            final_logits: self.logits_at(&cache, cache.len - 1),
        })
    }

    /// MLP keys (post-GeLU hidden) at every position of `layer`.
    pub fn mlp_keys(&self, tokens: &[u32], layer: usize) -> Result<Vec<Vec<f64>>> {
        self.check_layer(layer)?;
        let cache = self.run_forward(tokens, None)?;
        let m = self.config.d_mlp;
        Ok(cache.layers[layer].g.chunks_exact(m).map(<[f64]>::to_vec).collect())
    }

    pub fn grad_wrt_hidden(
        &self,
        tokens: &[u32],
        layer: usize,
        position: usize,
        loss: FinalTokenNll,
    ) -> Result<HiddenGrad> {
        self.grad_wrt_hidden_intervened(tokens, layer, position, loss, None)
    }

    /// Gradient of the loss w.r.t. the MLP output at (layer, position). With
    /// an intervention at that site this is the gradient w.r.t. the
    /// substituted vector.
    pub fn grad_wrt_hidden_intervened(
        &self,
        tokens: &[u32],
        layer: usize,
        position: usize,
        loss: FinalTokenNll,
        iv: Option<&Intervention>,
    ) -> Result<HiddenGrad> {
        self.check_layer(layer)?;
        if position >= tokens.len() {
            return Err(Error::Index(format!("position {position} >= length {}", tokens.len())));
        }
        let cache = self.run_forward(tokens, iv)?;
        let (value, seed) = self.nll_seed(&cache, loss.target)?;
        let resid = self.run_backward(tokens, &cache, &[(cache.len - 1, seed)], None);
        let d = self.config.d_model;
        Ok(HiddenGrad {
            loss: value,
            grad: resid[layer][position * d..(position + 1) * d].to_vec(),
        })
    }

    pub fn grad_wrt_mlp_weights(&self, tokens: &[u32], layer: usize, loss: FinalTokenNll) -> Result<MlpGrads> {
        self.check_layer(layer)?;
        Ok(self.grad_wrt_mlp_weights_all(tokens, loss)?.swap_remove(layer))
    }

    /// MLP gradients for every layer from a single backward pass.
    pub fn grad_wrt_mlp_weights_all(&self, tokens: &[u32], loss: FinalTokenNll) -> Result<Vec<MlpGrads>> {
        let cache = self.run_forward(tokens, None)?;
        let (value, seed) = self.nll_seed(&cache, loss.target)?;
        let mut grads = ParamGrads::zeros(self);
        self.run_backward(tokens, &cache, &[(cache.len - 1, seed)], Some(&mut grads));
        Ok((0..self.config.n_layers)
            .map(|l| MlpGrads {
                loss: value,
                w_in: grads.layer_block(l, "w_in").to_vec(),
                b_in: grads.layer_block(l, "b_in").to_vec(),
                w_out: grads.layer_block(l, "w_out").to_vec(),
                b_out: grads.layer_block(l, "b_out").to_vec(),
            })
            .collect())
    }

    /// NLL of `target` at the final position.
    pub fn final_token_loss(&self, tokens: &[u32], loss: FinalTokenNll, iv: Option<&Intervention>) -> Result<f64> {
        let cache = self.run_forward(tokens, iv)?;
        Ok(self.nll_seed(&cache, loss.target)?.0)
    }

    /// Mean next-token cross-entropy over the sequence.
    pub fn sequence_loss(&self, tokens: &[u32]) -> Result<f64> {
        if tokens.len() < 2 {
            return Err(Error::SequenceLength { len: tokens.len(), max: self.config.max_seq_len });
        }
        let cache = self.run_forward(tokens, None)?;
        let mut total = 0.0;
        for p in 0..tokens.len() - 1 {
            let dist = NextTokenDistribution::from_logits(&self.logits_at(&cache, p));
            total -= dist.prob(tokens[p + 1]).ln();
        }
        Ok(total / (tokens.len() - 1) as f64)
    }

    /// Mean next-token cross-entropy and its gradient, accumulated into `grads`
    /// with weight `scale`.
    pub fn sequence_loss_grad(&self, tokens: &[u32], grads: &mut ParamGrads, scale: f64) -> Result<f64> {
        if tokens.len() < 2 {
            return Err(Error::SequenceLength { len: tokens.len(), max: self.config.max_seq_len });
        }
        let cache = self.run_forward(tokens, None)?;
        let n = (tokens.len() - 1) as f64;
        let mut total = 0.0;
        let mut seeds = Vec::with_capacity(tokens.len() - 1);
        for p in 0..tokens.len() - 1 {
            let dist = NextTokenDistribution::from_logits(&self.logits_at(&cache, p));
            let target = tokens[p + 1] as usize;
            total -= dist.probs[target].ln();
            let mut dl = dist.probs;
            dl[target] -= 1.0;
            dl.iter_mut().for_each(|v| *v *= scale / n);
            seeds.push((p, dl));
        }
        self.run_backward(tokens, &cache, &seeds, Some(grads));
        Ok(total / n)
    }
}
