//! Causal-attention decoder: forward pass, analytic backward pass, and the
//! incremental key/value cache used at planning time.

use super::ops::{
    add_bias, bias_grad_acc, gelu, gelu_grad, layer_norm, layer_norm_backward, matmul,
    matmul_a_bt, matmul_at_b_acc, softmax_in_place,
};
use super::params::{LayerOffsets, ModelParams};
use super::{BeliefMatrix, EventToken, Target, TomError, TrainingSample};

/// Added inside the logarithm of the cross-entropy.
pub const LOG_EPS: f64 = 1e-12;

struct LayerCache {
    ln1_out: Vec<f64>,
    ln1_xhat: Vec<f64>,
    ln1_rstd: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `[heads, T, T]`, zero above the diagonal.
    probs: Vec<f64>,
    ctx: Vec<f64>,
    ln2_out: Vec<f64>,
    ln2_xhat: Vec<f64>,
    ln2_rstd: Vec<f64>,
    ffn_pre: Vec<f64>,
    ffn_act: Vec<f64>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    lnf_out: Vec<f64>,
    lnf_xhat: Vec<f64>,
    lnf_rstd: Vec<f64>,
}

impl ModelParams {
    fn w(&self, offset: usize, len: usize) -> &[f64] {
        &self.data[offset..offset + len]
    }

    pub(crate) fn check_tokens(&self, tokens: &[EventToken], start: usize) -> Result<(), TomError> {
        let cfg = self.config();
        if start + tokens.len() > cfg.max_seq {
            return Err(TomError::SequenceTooLong { len: start + tokens.len(), max: cfg.max_seq });
        }
        for (i, t) in tokens.iter().enumerate() {
            let ok = t.subject < cfg.num_players
                && t.object < cfg.num_players
                && t.predicate < cfg.num_predicates
                && t.face < cfg.num_emotions
                && t.tone < cfg.num_emotions;
            if !ok {
                return Err(TomError::TokenOutOfRange { position: start + i, token: *t });
            }
        }
        Ok(())
    }

    /// Input vector of one token: the five embeddings plus its position.
    pub fn embed_event(&self, token: &EventToken, position: usize) -> Result<Vec<f64>, TomError> {
        self.check_tokens(std::slice::from_ref(token), position)?;
        let mut out = vec![0.0; self.config().hidden];
        self.embed_into(token, position, &mut out);
        Ok(out)
    }

    fn embed_into(&self, t: &EventToken, position: usize, out: &mut [f64]) {
        let h = self.config().hidden;
        let o = &self.offsets;
        let mut rows = vec![
            o.subj + t.subject * h,
            o.pred + t.predicate * h,
            o.obj + t.object * h,
            o.pos + position * h,
        ];
        if let (Some(face), Some(tone)) = (o.face, o.tone) {
            rows.push(face + t.face * h);
            rows.push(tone + t.tone * h);
        }
        out.fill(0.0);
        for r in rows {
            for (x, w) in out.iter_mut().zip(&self.data[r..r + h]) {
                *x += w;
            }
        }
    }

    fn embed_sequence(&self, tokens: &[EventToken]) -> Vec<f64> {
        let h = self.config().hidden;
        let mut x = vec![0.0; tokens.len() * h];
        for (t, (tok, row)) in tokens.iter().zip(x.chunks_mut(h)).enumerate() {
            self.embed_into(tok, t, row);
        }
        x
    }

    fn run(&self, tokens: &[EventToken]) -> ForwardCache {
        let cfg = self.config();
        let (h, f, nh, d) = (cfg.hidden, cfg.ffn_dim(), cfg.heads, cfg.head_dim());
        let n = tokens.len();
        let scale = 1.0 / (d as f64).sqrt();
        let mut x = self.embed_sequence(tokens);
        let mut layers = Vec::with_capacity(cfg.layers);
        for lo in &self.offsets.layers {
            let mut ln1_out = vec![0.0; n * h];
            let mut ln1_xhat = vec![0.0; n * h];
            let ln1_rstd =
                layer_norm(&x, self.w(lo.ln1_g, h), self.w(lo.ln1_b, h), &mut ln1_out, &mut ln1_xhat);
            let project = |w: usize, b: Option<usize>| {
                let mut y = vec![0.0; n * h];
                matmul(&ln1_out, self.w(w, h * h), &mut y, n, h, h, false);
                if let Some(b) = b {
                    add_bias(&mut y, self.w(b, h));
                }
                y
            };
            let q = project(lo.wq, Some(lo.bq));
            let k = project(lo.wk, None);
            let v = project(lo.wv, Some(lo.bv));

            let mut probs = vec![0.0; nh * n * n];
            let mut ctx = vec![0.0; n * h];
            for head in 0..nh {
                let c0 = head * d;
                for t in 0..n {
                    let row = &mut probs[(head * n + t) * n..(head * n + t) * n + t + 1];
                    for (s, score) in row.iter_mut().enumerate() {
                        let dot: f64 = (0..d).map(|c| q[t * h + c0 + c] * k[s * h + c0 + c]).sum();
                        *score = dot * scale;
                    }
                    softmax_in_place(row);
                    for (s, &p) in row.iter().enumerate() {
                        for c in 0..d {
                            ctx[t * h + c0 + c] += p * v[s * h + c0 + c];
                        }
                    }
                }
            }
            let mut attn = vec![0.0; n * h];
            matmul(&ctx, self.w(lo.wo, h * h), &mut attn, n, h, h, false);
            add_bias(&mut attn, self.w(lo.bo, h));
            for (xi, a) in x.iter_mut().zip(&attn) {
                *xi += a;
            }

            let mut ln2_out = vec![0.0; n * h];
            let mut ln2_xhat = vec![0.0; n * h];
            let ln2_rstd =
                layer_norm(&x, self.w(lo.ln2_g, h), self.w(lo.ln2_b, h), &mut ln2_out, &mut ln2_xhat);
            let mut ffn_pre = vec![0.0; n * f];
            matmul(&ln2_out, self.w(lo.w1, h * f), &mut ffn_pre, n, h, f, false);
            add_bias(&mut ffn_pre, self.w(lo.b1, f));
            let ffn_act: Vec<f64> = ffn_pre.iter().map(|&u| gelu(u)).collect();
            let mut y = vec![0.0; n * h];
            matmul(&ffn_act, self.w(lo.w2, f * h), &mut y, n, f, h, false);
            add_bias(&mut y, self.w(lo.b2, h));
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi += yi;
            }
            layers.push(LayerCache {
                ln1_out,
                ln1_xhat,
                ln1_rstd,
                q,
                k,
                v,
                probs,
                ctx,
                ln2_out,
                ln2_xhat,
                ln2_rstd,
                ffn_pre,
                ffn_act,
            });
        }
        let mut lnf_out = vec![0.0; n * h];
        let mut lnf_xhat = vec![0.0; n * h];
        let o = &self.offsets;
        let lnf_rstd = layer_norm(&x, self.w(o.lnf_g, h), self.w(o.lnf_b, h), &mut lnf_out, &mut lnf_xhat);
        ForwardCache { layers, lnf_out, lnf_xhat, lnf_rstd }
    }

    /// Belief matrix from a final-normalized hidden row.
    fn head_probs(&self, z: &[f64]) -> Vec<f64> {
        let cfg = self.config();
        let (h, p) = (cfg.hidden, cfg.num_players);
        let mut logits = self.w(self.offsets.head_b, p * p).to_vec();
        matmul(z, self.w(self.offsets.head_w, h * p * p), &mut logits, 1, h, p * p, true);
        for row in logits.chunks_mut(p) {
            softmax_in_place(row);
        }
        logits
    }

    /// One belief matrix per input position. Position k sees tokens 0..=k only.
    pub fn forward(&self, tokens: &[EventToken]) -> Result<Vec<BeliefMatrix>, TomError> {
        self.check_tokens(tokens, 0)?;
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        let cache = self.run(tokens);
        let (h, p) = (self.config().hidden, self.config().num_players);
        Ok(cache
            .lnf_out
            .chunks(h)
            .map(|z| BeliefMatrix::from_flat(p, self.head_probs(z)))
            .collect())
    }

    /// Summed cross-entropy of one sample and its gradient (same layout as the
    /// parameter vector).
    pub fn loss_and_grad(&self, sample: &TrainingSample) -> Result<(f64, Vec<f64>), TomError> {
        let mut grad = vec![0.0; self.num_params()];
        let loss = self.accumulate_grad(sample, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    /// Adds `weight * dL/dθ` of one sample into `grad`; returns the unweighted loss.
    pub fn accumulate_grad(&self, sample: &TrainingSample, weight: f64, grad: &mut [f64]) -> Result<f64, TomError> {
        sample.validate(self.config().num_players)?;
        self.check_tokens(&sample.tokens, 0)?;
        let tokens = &sample.tokens;
        let n = tokens.len();
        if n == 0 || sample.targets.is_empty() {
            return Ok(0.0);
        }
        let cfg = self.config();
        let (h, f, p, nh, d) = (cfg.hidden, cfg.ffn_dim(), cfg.num_players, cfg.heads, cfg.head_dim());
        let scale = 1.0 / (d as f64).sqrt();
        let o = self.offsets.clone();
        let cache = self.run(tokens);

        // output heads
        let mut loss = 0.0;
        let mut dz = vec![0.0; n * h];
        for Target { index, belief } in &sample.targets {
            let z = &cache.lnf_out[index * h..(index + 1) * h];
            let probs = self.head_probs(z);
            let mut dlogits = vec![0.0; p * p];
            for i in 0..p {
                let pr = &probs[i * p..(i + 1) * p];
                let gt = belief.row(i);
                let mut dp = vec![0.0; p];
                for j in 0..p {
                    loss -= gt[j] * (pr[j] + LOG_EPS).ln();
                    dp[j] = -gt[j] / (pr[j] + LOG_EPS);
                }
                let dot: f64 = (0..p).map(|j| pr[j] * dp[j]).sum();
                for j in 0..p {
                    dlogits[i * p + j] = weight * pr[j] * (dp[j] - dot);
                }
            }
            matmul_at_b_acc(z, &dlogits, &mut grad[o.head_w..o.head_w + h * p * p], 1, h, p * p);
            bias_grad_acc(&dlogits, &mut grad[o.head_b..o.head_b + p * p]);
            matmul_a_bt(&dlogits, self.w(o.head_w, h * p * p), &mut dz[index * h..(index + 1) * h], 1, p * p, h, true);
        }

        // final layer norm
        let mut dx = vec![0.0; n * h];
        {
            let (dg, db) = split_two(grad, o.lnf_g, o.lnf_b, h);
            layer_norm_backward(&dz, &cache.lnf_xhat, &cache.lnf_rstd, self.w(o.lnf_g, h), &mut dx, dg, db);
        }

        for (lo, lc) in o.layers.iter().zip(&cache.layers).rev() {
            self.layer_backward(lo, lc, &mut dx, grad, n, h, f, nh, d, scale);
        }

        // embeddings
        for (t, tok) in tokens.iter().enumerate() {
            let dxr = &dx[t * h..(t + 1) * h];
            let mut rows = vec![o.subj + tok.subject * h, o.pred + tok.predicate * h, o.obj + tok.object * h, o.pos + t * h];
            if let (Some(face), Some(tone)) = (o.face, o.tone) {
                rows.push(face + tok.face * h);
                rows.push(tone + tok.tone * h);
            }
            for r in rows {
                for (g, dv) in grad[r..r + h].iter_mut().zip(dxr) {
                    *g += dv;
                }
            }
        }
        Ok(loss)
    }

    #[allow(clippy::too_many_arguments)]
    fn layer_backward(
        &self,
        lo: &LayerOffsets,
        lc: &LayerCache,
        dx: &mut [f64],
        grad: &mut [f64],
        n: usize,
        h: usize,
        f: usize,
        nh: usize,
        d: usize,
        scale: f64,
    ) {
        // feed-forward branch: x_out = x_mid + W2 gelu(W1 ln2(x_mid))
        let dy = dx.to_vec();
        matmul_at_b_acc(&lc.ffn_act, &dy, &mut grad[lo.w2..lo.w2 + f * h], n, f, h);
        bias_grad_acc(&dy, &mut grad[lo.b2..lo.b2 + h]);
        let mut dact = vec![0.0; n * f];
        matmul_a_bt(&dy, self.w(lo.w2, f * h), &mut dact, n, h, f, false);
        for (g, &u) in dact.iter_mut().zip(&lc.ffn_pre) {
            *g *= gelu_grad(u);
        }
        matmul_at_b_acc(&lc.ln2_out, &dact, &mut grad[lo.w1..lo.w1 + h * f], n, h, f);
        bias_grad_acc(&dact, &mut grad[lo.b1..lo.b1 + f]);
        let mut dln2 = vec![0.0; n * h];
        matmul_a_bt(&dact, self.w(lo.w1, h * f), &mut dln2, n, f, h, false);
        {
            let (dg, db) = split_two(grad, lo.ln2_g, lo.ln2_b, h);
            layer_norm_backward(&dln2, &lc.ln2_xhat, &lc.ln2_rstd, self.w(lo.ln2_g, h), dx, dg, db);
        }

        // attention branch: x_mid = x_in + Wo attn(ln1(x_in))
        let dattn = dx.to_vec();
        matmul_at_b_acc(&lc.ctx, &dattn, &mut grad[lo.wo..lo.wo + h * h], n, h, h);
        bias_grad_acc(&dattn, &mut grad[lo.bo..lo.bo + h]);
        let mut dctx = vec![0.0; n * h];
        matmul_a_bt(&dattn, self.w(lo.wo, h * h), &mut dctx, n, h, h, false);

        let mut dq = vec![0.0; n * h];
        let mut dk = vec![0.0; n * h];
        let mut dv = vec![0.0; n * h];
        let mut dp = vec![0.0; n];
        for head in 0..nh {
            let c0 = head * d;
            for t in 0..n {
                let pr = &lc.probs[(head * n + t) * n..(head * n + t) * n + t + 1];
                for s in 0..=t {
                    let mut acc = 0.0;
                    for c in 0..d {
                        acc += dctx[t * h + c0 + c] * lc.v[s * h + c0 + c];
                        dv[s * h + c0 + c] += pr[s] * dctx[t * h + c0 + c];
                    }
                    dp[s] = acc;
                }
                let dot: f64 = (0..=t).map(|s| pr[s] * dp[s]).sum();
                for s in 0..=t {
                    let ds = pr[s] * (dp[s] - dot) * scale;
                    for c in 0..d {
                        dq[t * h + c0 + c] += ds * lc.k[s * h + c0 + c];
                        dk[s * h + c0 + c] += ds * lc.q[t * h + c0 + c];
                    }
                }
            }
        }
        let mut dln1 = vec![0.0; n * h];
        for (dproj, w, b) in [(&dq, lo.wq, Some(lo.bq)), (&dk, lo.wk, None), (&dv, lo.wv, Some(lo.bv))] {
            matmul_at_b_acc(&lc.ln1_out, dproj, &mut grad[w..w + h * h], n, h, h);
            if let Some(b) = b {
                bias_grad_acc(dproj, &mut grad[b..b + h]);
            }
            matmul_a_bt(dproj, self.w(w, h * h), &mut dln1, n, h, h, true);
        }
        let (dg, db) = split_two(grad, lo.ln1_g, lo.ln1_b, h);
        layer_norm_backward(&dln1, &lc.ln1_xhat, &lc.ln1_rstd, self.w(lo.ln1_g, h), dx, dg, db);
    }

    /// Summed cross-entropy of one sample (no gradient).
    pub fn sample_loss(&self, sample: &TrainingSample) -> Result<f64, TomError> {
        sample.validate(self.config().num_players)?;
        self.check_tokens(&sample.tokens, 0)?;
        if sample.targets.is_empty() {
            return Ok(0.0);
        }
        let outputs = self.forward(&sample.tokens)?;
        Ok(sample.targets.iter().map(|t| cross_entropy(&outputs[t.index], &t.belief)).sum())
    }
}

/// `-sum_ij gt[i,j] * ln(pred[i,j] + 1e-12)`
pub fn cross_entropy(pred: &BeliefMatrix, gt: &BeliefMatrix) -> f64 {
    pred.as_flat()
        .iter()
        .zip(gt.as_flat())
        .map(|(&p, &g)| -g * (p + LOG_EPS).ln())
        .sum()
}

/// Two disjoint `len`-long windows of `grad` starting at `a < b`.
fn split_two(grad: &mut [f64], a: usize, b: usize, len: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a + len <= b);
    let (lo, hi) = grad.split_at_mut(b);
    (&mut lo[a..a + len], &mut hi[..len])
}

/// Keys and values of a processed prefix, extendable one token at a time.
#[derive(Debug, Clone)]
pub struct KvCache {
    len: usize,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    /// Final-normalized hidden state of the last token.
    last: Option<Vec<f64>>,
}

impl KvCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl ModelParams {
    pub fn empty_cache(&self) -> KvCache {
        let l = self.config().layers;
        KvCache { len: 0, keys: vec![Vec::new(); l], values: vec![Vec::new(); l], last: None }
    }

    /// Runs `tokens` after the cached prefix, equivalent to a full forward
    /// pass over the concatenation.
    pub fn extend_cache(&self, cache: &mut KvCache, tokens: &[EventToken]) -> Result<(), TomError> {
        self.check_tokens(tokens, cache.len)?;
        let cfg = self.config();
        let (h, f, nh, d) = (cfg.hidden, cfg.ffn_dim(), cfg.heads, cfg.head_dim());
        let scale = 1.0 / (d as f64).sqrt();
        let mut a = vec![0.0; h];
        let mut xhat = vec![0.0; h];
        let mut q = vec![0.0; h];
        let mut kv = vec![0.0; h];
        let mut ctx = vec![0.0; h];
        let mut tmp = vec![0.0; h];
        let mut u = vec![0.0; f];
        for tok in tokens {
            let mut x = vec![0.0; h];
            self.embed_into(tok, cache.len, &mut x);
            let len = cache.len + 1;
            for (l, lo) in self.offsets.layers.iter().enumerate() {
                layer_norm(&x, self.w(lo.ln1_g, h), self.w(lo.ln1_b, h), &mut a, &mut xhat);
                let proj = |w: usize, b: Option<usize>, out: &mut [f64]| match b {
                    Some(b) => {
                        out.copy_from_slice(self.w(b, h));
                        matmul(&a, self.w(w, h * h), out, 1, h, h, true);
                    }
                    None => matmul(&a, self.w(w, h * h), out, 1, h, h, false),
                };
                proj(lo.wq, Some(lo.bq), &mut q);
                proj(lo.wk, None, &mut kv);
                cache.keys[l].extend_from_slice(&kv);
                proj(lo.wv, Some(lo.bv), &mut kv);
                cache.values[l].extend_from_slice(&kv);
                let keys = &cache.keys[l];
                let values = &cache.values[l];
                ctx.fill(0.0);
                let mut scores = vec![0.0; len];
                for head in 0..nh {
                    let c0 = head * d;
                    for (s, score) in scores.iter_mut().enumerate() {
                        let dot: f64 = (0..d).map(|c| q[c0 + c] * keys[s * h + c0 + c]).sum();
                        *score = dot * scale;
                    }
                    softmax_in_place(&mut scores);
                    for (s, &p) in scores.iter().enumerate() {
                        for c in 0..d {
                            ctx[c0 + c] += p * values[s * h + c0 + c];
                        }
                    }
                }
                tmp.copy_from_slice(self.w(lo.bo, h));
                matmul(&ctx, self.w(lo.wo, h * h), &mut tmp, 1, h, h, true);
                for (xi, t) in x.iter_mut().zip(&tmp) {
                    *xi += t;
                }
                layer_norm(&x, self.w(lo.ln2_g, h), self.w(lo.ln2_b, h), &mut a, &mut xhat);
                u.copy_from_slice(self.w(lo.b1, f));
                matmul(&a, self.w(lo.w1, h * f), &mut u, 1, h, f, true);
                for v in u.iter_mut() {
                    *v = gelu(*v);
                }
                tmp.copy_from_slice(self.w(lo.b2, h));
                matmul(&u, self.w(lo.w2, f * h), &mut tmp, 1, f, h, true);
                for (xi, t) in x.iter_mut().zip(&tmp) {
                    *xi += t;
                }
            }
            let o = &self.offsets;
            let mut z = vec![0.0; h];
            layer_norm(&x, self.w(o.lnf_g, h), self.w(o.lnf_b, h), &mut z, &mut xhat);
            cache.last = Some(z);
            cache.len = len;
        }
        Ok(())
    }

    /// Belief after the cached prefix; uniform when nothing has been said.
    pub fn cache_belief(&self, cache: &KvCache) -> BeliefMatrix {
        let p = self.config().num_players;
        match &cache.last {
            Some(z) => BeliefMatrix::from_flat(p, self.head_probs(z)),
            None => BeliefMatrix::uniform(p),
        }
    }
}
