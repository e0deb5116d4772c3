//! Speaker-conditioned decoder of post-norm FFT blocks (self-attention plus
//! two convolutions), with every convolution causal.

use crate::error::{Error, Result};
use crate::masking::build_chunk_mask_for_len;
use crate::model_io::{Model, SUBSAMPLE};
use crate::nn::{
    masked_mhsa, mhsa_streaming_step, nearest_upsample_tm, relu_inplace, AttentionWeights,
    AttnCache, Conv1d, ConvCache, ConvSpec, LayerNorm, Linear,
};
use crate::tensor::Tensor;

use super::{add_positional_encoding, attention_weights, layer_norm, linear_at};

#[derive(Debug, Clone)]
struct FftBlock {
    attn: AttentionWeights,
    norm1: LayerNorm,
    conv1: Conv1d,
    conv2: Conv1d,
    norm2: LayerNorm,
}

/// Per-block streaming state.
#[derive(Debug, Clone)]
pub struct BlockCache {
    pub attn: AttnCache,
    pub conv1: ConvCache,
    pub conv2: ConvCache,
}

impl BlockCache {
    pub fn reset(&mut self) {
        self.attn.clear();
        self.conv1.reset();
        self.conv2.reset();
    }
}

fn add_into(x: &mut Tensor, y: &Tensor) {
    for (v, a) in x.data_mut().iter_mut().zip(y.data()) {
        *v += a;
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    input: Linear,
    speakers: Tensor,
    blocks: Vec<FftBlock>,
    mel: Linear,
    heads: usize,
    width: usize,
}

impl Decoder {
    pub fn from_model(model: &Model) -> Result<Self> {
        let cfg = &model.config().decoder;
        let d = cfg.d_model;
        let blocks = (0..cfg.layers)
            .map(|i| {
                let p = format!("decoder.blocks.{i}");
                Ok(FftBlock {
                    attn: attention_weights(model, &format!("{p}.attn"))?,
                    norm1: layer_norm(model, &format!("{p}.norm1"))?,
                    conv1: Conv1d::new(
                        ConvSpec::causal(d, cfg.ff_dim, cfg.conv_kernel, 1),
                        model.tensor(&format!("{p}.conv1.weight"))?,
                        model.tensor(&format!("{p}.conv1.bias"))?,
                    )?,
                    conv2: Conv1d::new(
                        ConvSpec::causal(cfg.ff_dim, d, 1, 1),
                        model.tensor(&format!("{p}.conv2.weight"))?,
                        model.tensor(&format!("{p}.conv2.bias"))?,
                    )?,
                    norm2: layer_norm(model, &format!("{p}.norm2"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            input: linear_at(model, "decoder.input")?,
            speakers: model.tensor("decoder.speaker_embedding")?.clone(),
            blocks,
            mel: linear_at(model, "decoder.mel")?,
            heads: cfg.heads,
            width: d,
        })
    }

    pub fn num_speakers(&self) -> usize {
        self.speakers.rows()
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn check_speaker(&self, speaker: usize) -> Result<()> {
        if speaker >= self.num_speakers() {
            return Err(Error::InvalidSpeaker {
                id: speaker,
                speakers: self.num_speakers(),
            });
        }
        Ok(())
    }

    pub fn new_caches(&self, history: Option<usize>) -> Vec<BlockCache> {
        self.blocks
            .iter()
            .map(|b| BlockCache {
                attn: AttnCache::new(self.width, self.heads, history),
                conv1: b.conv1.new_cache(),
                conv2: b.conv2.new_cache(),
            })
            .collect()
    }

    /// PPG frames to speaker-conditioned decoder input, repeated to the mel
    /// frame rate.
    fn embed(&self, ppg: &Tensor, speaker: usize, position: usize) -> Result<Tensor> {
        self.check_speaker(speaker)?;
        let h = self.input.forward(ppg)?;
        let mut x = nearest_upsample_tm(&h, SUBSAMPLE)?;
        let emb = self.speakers.row(speaker);
        for r in 0..x.rows() {
            for (v, e) in x.row_mut(r).iter_mut().zip(emb) {
                *v += e;
            }
        }
        add_positional_encoding(&mut x, position);
        Ok(x)
    }

    fn conv_tail(
        &self,
        block: &FftBlock,
        mut x: Tensor,
        cache: Option<&mut BlockCache>,
    ) -> Result<Tensor> {
        let h = match cache {
            Some(c) => {
                let mut h = block.conv1.step_tm(&x, &mut c.conv1)?;
                relu_inplace(h.data_mut());
                block.conv2.step_tm(&h, &mut c.conv2)?
            }
            None => {
                let mut h = block.conv1.forward_tm(&x)?;
                relu_inplace(h.data_mut());
                block.conv2.forward_tm(&h)?
            }
        };
        add_into(&mut x, &h);
        block.norm2.forward_inplace(&mut x)?;
        Ok(x)
    }

    /// Whole-sequence pass; `chunk` is in mel frames.
    pub fn offline(
        &self,
        ppg: &Tensor,
        speaker: usize,
        chunk: usize,
        history: Option<usize>,
    ) -> Result<Tensor> {
        if ppg.rows() == 0 {
            self.check_speaker(speaker)?;
            return Ok(Tensor::zeros(&[0, self.mel.out_dim()]));
        }
        let mut x = self.embed(ppg, speaker, 0)?;
        let mask = build_chunk_mask_for_len(x.rows(), chunk, history)?;
        for block in &self.blocks {
            let a = masked_mhsa(&x, &mask, &block.attn, self.heads)?;
            add_into(&mut x, &a);
            block.norm1.forward_inplace(&mut x)?;
            x = self.conv_tail(block, x, None)?;
        }
        self.mel.forward(&x)
    }

    /// One attention chunk of PPG frames; `position` is the first mel frame.
    pub fn step(
        &self,
        ppg: &Tensor,
        speaker: usize,
        position: usize,
        caches: &mut [BlockCache],
    ) -> Result<Tensor> {
        let mut x = self.embed(ppg, speaker, position)?;
        for (block, cache) in self.blocks.iter().zip(caches.iter_mut()) {
            let a = mhsa_streaming_step(&x, &mut cache.attn, &block.attn, self.heads)?;
            add_into(&mut x, &a);
            block.norm1.forward_inplace(&mut x)?;
            x = self.conv_tail(block, x, Some(cache))?;
        }
        self.mel.forward(&x)
    }
}
