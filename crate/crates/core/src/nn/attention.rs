//! Multi-head self-attention, offline with a boolean chunk mask and
//! incremental with a key/value cache.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::masking::AttentionMask;
use crate::nn::ops::Linear;
use crate::tensor::Tensor;

/// Additive logit applied to masked-out positions. Finite so that a masked
/// position contributes an exact zero after `exp` without producing NaN.
pub const MASK_LOGIT: f32 = -1e9;

#[derive(Debug, Clone)]
pub struct AttentionWeights {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl AttentionWeights {
    pub fn dim(&self) -> usize {
        self.query.in_dim()
    }

    fn check(&self, d: usize, heads: usize) -> Result<usize> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Shape(format!(
                "model width {d} not divisible by {heads} heads"
            )));
        }
        for l in [&self.query, &self.key, &self.value, &self.output] {
            if l.in_dim() != d || l.out_dim() != d {
                return Err(Error::Shape(format!(
                    "attention projection {}x{} for width {d}",
                    l.in_dim(),
                    l.out_dim()
                )));
            }
        }
        Ok(d / heads)
    }
}

/// Scaled dot-product attention of `nq` queries over `nk` keys. `visible`
/// decides per (query, key) whether the mask logit is added. Returns the
/// concatenated head outputs `[nq, d]`, and optionally the probabilities.
fn attend(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    d: usize,
    heads: usize,
    visible: impl Fn(usize, usize) -> bool,
    mut probs_out: Option<&mut Vec<f32>>,
) -> Vec<f32> {
    let nq = q.len() / d;
    let nk = k.len() / d;
    let hd = d / heads;
    let scale = 1.0 / (hd as f32).sqrt();
    let mut out = vec![0.0; nq * d];
    let mut logits = vec![0.0; nk];
    for h in 0..heads {
        let off = h * hd;
        for i in 0..nq {
            let qi = &q[i * d + off..i * d + off + hd];
            for (j, l) in logits.iter_mut().enumerate() {
                let kj = &k[j * d + off..j * d + off + hd];
                let dot: f32 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                *l = dot * scale;
                if !visible(i, j) {
                    *l += MASK_LOGIT;
                }
            }
            super::ops::softmax_inplace(&mut logits);
            let oi = &mut out[i * d + off..i * d + off + hd];
            for (j, &p) in logits.iter().enumerate() {
                let vj = &v[j * d + off..j * d + off + hd];
                for (o, vv) in oi.iter_mut().zip(vj) {
                    *o += p * vv;
                }
            }
            if let Some(buf) = probs_out.as_deref_mut() {
                buf.extend_from_slice(&logits);
            }
        }
    }
    out
}

fn check_mask(mask: &AttentionMask, t: usize) -> Result<()> {
    if mask.size() != t {
        return Err(Error::Shape(format!(
            "mask size {} for {t} frames",
            mask.size()
        )));
    }
    if let Some(i) = (0..t).find(|&i| mask.count_row(i) == 0) {
        return Err(Error::ContractViolation(format!(
            "query row {i} has no visible key"
        )));
    }
    Ok(())
}

/// Offline masked multi-head self-attention over `x: [T, d]`.
pub fn masked_mhsa(
    x: &Tensor,
    mask: &AttentionMask,
    w: &AttentionWeights,
    heads: usize,
) -> Result<Tensor> {
    let d = w.dim();
    let t = x.expect_2d("attention input", d)?;
    w.check(d, heads)?;
    check_mask(mask, t)?;
    let (q, k, v) = (w.query.forward(x)?, w.key.forward(x)?, w.value.forward(x)?);
    let ctx = attend(
        q.data(),
        k.data(),
        v.data(),
        d,
        heads,
        |i, j| mask.get(i, j),
        None,
    );
    w.output.forward(&Tensor::new(vec![t, d], ctx)?)
}

/// Attention probabilities `[heads, T, T]` for inspection.
pub fn masked_attention_probs(
    x: &Tensor,
    mask: &AttentionMask,
    w: &AttentionWeights,
    heads: usize,
) -> Result<Tensor> {
    let d = w.dim();
    let t = x.expect_2d("attention input", d)?;
    w.check(d, heads)?;
    check_mask(mask, t)?;
    let (q, k, v) = (w.query.forward(x)?, w.key.forward(x)?, w.value.forward(x)?);
    let mut probs = Vec::with_capacity(heads * t * t);
    attend(
        q.data(),
        k.data(),
        v.data(),
        d,
        heads,
        |i, j| mask.get(i, j),
        Some(&mut probs),
    );
    Tensor::new(vec![heads, t, t], probs)
}

/// Keys and values of previously seen chunks for one attention layer.
///
/// Entries are kept per chunk so that a history bound drops whole chunks
/// only, which keeps the cache consistent with the offline chunk mask.
#[derive(Debug, Clone)]
pub struct AttnCache {
    dim: usize,
    heads: usize,
    keys: Vec<f32>,
    values: Vec<f32>,
    chunk_lens: VecDeque<usize>,
    history_chunks: Option<usize>,
}

impl AttnCache {
    pub fn new(dim: usize, heads: usize, history_chunks: Option<usize>) -> Self {
        Self {
            dim,
            heads,
            keys: Vec::new(),
            values: Vec::new(),
            chunk_lens: VecDeque::new(),
            history_chunks,
        }
    }

    pub fn frames(&self) -> usize {
        self.keys.len() / self.dim
    }

    pub fn chunks(&self) -> usize {
        self.chunk_lens.len()
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn clear(&mut self) {
        self.keys.clear();
        self.values.clear();
        self.chunk_lens.clear();
    }

    fn push_chunk(&mut self, k: &[f32], v: &[f32]) {
        self.keys.extend_from_slice(k);
        self.values.extend_from_slice(v);
        self.chunk_lens.push_back(k.len() / self.dim);
        if let Some(h) = self.history_chunks {
            let mut drop = 0;
            while self.chunk_lens.len() > h {
                drop += self.chunk_lens.pop_front().unwrap_or(0);
            }
            if drop > 0 {
                self.keys.drain(..drop * self.dim);
                self.values.drain(..drop * self.dim);
            }
        }
    }
}

/// Attends the queries of one new chunk over the cached history plus the
/// chunk itself, then appends the chunk's keys and values to `cache`.
pub fn mhsa_streaming_step(
    x_chunk: &Tensor,
    cache: &mut AttnCache,
    w: &AttentionWeights,
    heads: usize,
) -> Result<Tensor> {
    let d = w.dim();
    let c = x_chunk.expect_2d("attention chunk", d)?;
    w.check(d, heads)?;
    if cache.dim != d || cache.heads != heads {
        return Err(Error::Shape(format!(
            "cache is {}-wide with {} heads, layer is {d}-wide with {heads} heads",
            cache.dim, cache.heads
        )));
    }
    if c == 0 {
        return Tensor::new(vec![0, d], Vec::new());
    }
    let (q, k, v) = (
        w.query.forward(x_chunk)?,
        w.key.forward(x_chunk)?,
        w.value.forward(x_chunk)?,
    );
    let mut keys = Vec::with_capacity(cache.keys.len() + k.len());
    keys.extend_from_slice(&cache.keys);
    keys.extend_from_slice(k.data());
    let mut values = Vec::with_capacity(cache.values.len() + v.len());
    values.extend_from_slice(&cache.values);
    values.extend_from_slice(v.data());
    let ctx = attend(q.data(), &keys, &values, d, heads, |_, _| true, None);
    cache.push_chunk(k.data(), v.data());
    w.output.forward(&Tensor::new(vec![c, d], ctx)?)
}
