//! Chunk-masked transformer encoder producing phonetic posteriorgrams.

use crate::error::Result;
use crate::masking::build_chunk_mask_for_len;
use crate::model_io::Model;
use crate::nn::{
    masked_mhsa, mhsa_streaming_step, relu_inplace, softmax_rows, AttentionWeights, AttnCache,
    LayerNorm, Linear,
};
use crate::tensor::Tensor;

use super::{add_positional_encoding, attention_weights, layer_norm, linear_at};

/// Pre-norm transformer layer.
#[derive(Debug, Clone)]
struct EncoderLayer {
    norm1: LayerNorm,
    attn: AttentionWeights,
    norm2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

impl EncoderLayer {
    fn feed_forward(&self, mut x: Tensor, attn_out: &Tensor) -> Result<Tensor> {
        for (v, a) in x.data_mut().iter_mut().zip(attn_out.data()) {
            *v += a;
        }
        let mut h = x.clone();
        self.norm2.forward_inplace(&mut h)?;
        let mut h = self.ff1.forward(&h)?;
        relu_inplace(h.data_mut());
        let h = self.ff2.forward(&h)?;
        for (v, a) in x.data_mut().iter_mut().zip(h.data()) {
            *v += a;
        }
        Ok(x)
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    layers: Vec<EncoderLayer>,
    final_norm: LayerNorm,
    head: Linear,
    heads: usize,
    softmax: bool,
}

impl Encoder {
    pub fn from_model(model: &Model) -> Result<Self> {
        let cfg = &model.config().encoder;
        let layers = (0..cfg.layers)
            .map(|i| {
                let p = format!("encoder.layers.{i}");
                Ok(EncoderLayer {
                    norm1: layer_norm(model, &format!("{p}.norm1"))?,
                    attn: attention_weights(model, &format!("{p}.attn"))?,
                    norm2: layer_norm(model, &format!("{p}.norm2"))?,
                    ff1: linear_at(model, &format!("{p}.ff1"))?,
                    ff2: linear_at(model, &format!("{p}.ff2"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers,
            final_norm: layer_norm(model, "encoder.final_norm")?,
            head: linear_at(model, "encoder.ppg")?,
            heads: cfg.heads,
            softmax: cfg.ppg_softmax,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn ppg_dim(&self) -> usize {
        self.head.out_dim()
    }

    fn project(&self, mut x: Tensor) -> Result<Tensor> {
        self.final_norm.forward_inplace(&mut x)?;
        let mut y = self.head.forward(&x)?;
        if self.softmax {
            softmax_rows(&mut y);
        }
        Ok(y)
    }

    /// Whole-sequence pass over subsampled frames with the chunk mask.
    pub fn offline(&self, mut x: Tensor, chunk: usize, history: Option<usize>) -> Result<Tensor> {
        if x.rows() == 0 {
            return Ok(Tensor::zeros(&[0, self.ppg_dim()]));
        }
        add_positional_encoding(&mut x, 0);
        let mask = build_chunk_mask_for_len(x.rows(), chunk, history)?;
        for layer in &self.layers {
            let mut h = x.clone();
            layer.norm1.forward_inplace(&mut h)?;
            let a = masked_mhsa(&h, &mask, &layer.attn, self.heads)?;
            x = layer.feed_forward(x, &a)?;
        }
        self.project(x)
    }

    /// One attention chunk of subsampled frames starting at `position`.
    pub fn step(&self, mut x: Tensor, position: usize, caches: &mut [AttnCache]) -> Result<Tensor> {
        add_positional_encoding(&mut x, position);
        for (layer, cache) in self.layers.iter().zip(caches.iter_mut()) {
            let mut h = x.clone();
            layer.norm1.forward_inplace(&mut h)?;
            let a = mhsa_streaming_step(&h, cache, &layer.attn, self.heads)?;
            x = layer.feed_forward(x, &a)?;
        }
        self.project(x)
    }
}
