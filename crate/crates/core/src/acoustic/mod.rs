//! Streaming acoustic model: fbank frames to PPGs (encoder) to mel frames
//! (decoder), driven chunk by chunk through an [`AcousticSession`].
//!
//! Frame rates: fbank and mel frames are 10 ms, PPG frames are 40 ms. A
//! chunk of `chunk_ms` covers `chunk_ms / 40` PPG frames in the encoder's
//! attention and `chunk_ms / 10` mel frames in the decoder's.

mod decoder;
mod encoder;
mod session;
pub mod subsample;

pub use decoder::Decoder;
pub use encoder::Encoder;
pub use session::AcousticSession;
pub use subsample::{SubsampleState, Subsampler};

use crate::error::Result;
use crate::model_io::{validate_chunk_ms, Model, FRAMES_PER_40MS, N_MELS, SUBSAMPLE};
use crate::nn::{AttentionWeights, LayerNorm, Linear};
use crate::tensor::Tensor;

pub(crate) fn linear_at(model: &Model, prefix: &str) -> Result<Linear> {
    Linear::new(
        model.tensor(&format!("{prefix}.weight"))?,
        model.tensor(&format!("{prefix}.bias"))?,
    )
}

pub(crate) fn layer_norm(model: &Model, prefix: &str) -> Result<LayerNorm> {
    LayerNorm::new(
        model.tensor(&format!("{prefix}.weight"))?,
        model.tensor(&format!("{prefix}.bias"))?,
    )
}

pub(crate) fn attention_weights(model: &Model, prefix: &str) -> Result<AttentionWeights> {
    Ok(AttentionWeights {
        query: linear_at(model, &format!("{prefix}.q"))?,
        key: linear_at(model, &format!("{prefix}.k"))?,
        value: linear_at(model, &format!("{prefix}.v"))?,
        output: linear_at(model, &format!("{prefix}.o"))?,
    })
}

/// Adds sinusoidal absolute position codes, rows numbered from `start`.
pub(crate) fn add_positional_encoding(x: &mut Tensor, start: usize) {
    let d = x.cols();
    for r in 0..x.rows() {
        let pos = (start + r) as f32;
        for (i, v) in x.row_mut(r).iter_mut().enumerate() {
            let freq = (-(((i / 2) * 2) as f32) * (10000f32).ln() / d as f32).exp();
            let angle = pos * freq;
            *v += if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
}

/// Encoder and decoder weights.
#[derive(Debug, Clone)]
pub struct AcousticModel {
    subsampler: Subsampler,
    encoder: Encoder,
    decoder: Decoder,
}

/// Chunk geometry derived from a chunk length in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkGeometry {
    pub chunk_ms: usize,
    /// Fbank frames per chunk.
    pub fbank_frames: usize,
    /// PPG frames per encoder attention chunk.
    pub ppg_frames: usize,
    /// Mel frames per decoder attention chunk.
    pub mel_frames: usize,
}

impl ChunkGeometry {
    pub fn new(chunk_ms: usize) -> Result<Self> {
        validate_chunk_ms(chunk_ms)?;
        let ppg_frames = chunk_ms / 40;
        Ok(Self {
            chunk_ms,
            fbank_frames: ppg_frames * FRAMES_PER_40MS,
            ppg_frames,
            mel_frames: ppg_frames * SUBSAMPLE,
        })
    }
}

/// Replicates the last frame so that every started 40 ms unit of input
/// yields its PPG frame (the subsampler needs three frames of lookahead).
pub fn pad_for_flush(fbank: &Tensor) -> Result<Tensor> {
    let n = fbank.expect_2d("fbank", N_MELS)?;
    if n == 0 {
        return Ok(fbank.clone());
    }
    let target = flush_target(n);
    let mut data = fbank.data().to_vec();
    let last = fbank.row(n - 1).to_vec();
    for _ in n..target {
        data.extend_from_slice(&last);
    }
    Tensor::new(vec![target, N_MELS], data)
}

/// Total input frames after flush padding: enough for `ceil(n/4)` outputs.
pub(crate) fn flush_target(n: usize) -> usize {
    let owed = n.div_ceil(SUBSAMPLE);
    (SUBSAMPLE * owed + subsample::RECEPTIVE_FIELD - SUBSAMPLE).max(n)
}

impl AcousticModel {
    pub fn from_model(model: &Model) -> Result<Self> {
        Ok(Self {
            subsampler: Subsampler::from_model(model)?,
            encoder: Encoder::from_model(model)?,
            decoder: Decoder::from_model(model)?,
        })
    }

    pub fn subsampler(&self) -> &Subsampler {
        &self.subsampler
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn num_speakers(&self) -> usize {
        self.decoder.num_speakers()
    }

    pub fn session(
        &self,
        speaker: usize,
        chunk_ms: usize,
        history: Option<usize>,
    ) -> Result<AcousticSession<'_>> {
        AcousticSession::new(self, speaker, chunk_ms, history)
    }

    /// Non-streaming encoder over the given fbank frames (no flush padding).
    pub fn encode_offline(
        &self,
        fbank: &Tensor,
        chunk_ms: usize,
        history: Option<usize>,
    ) -> Result<Tensor> {
        let g = ChunkGeometry::new(chunk_ms)?;
        let x = self.subsampler.offline(fbank)?;
        self.encoder.offline(x, g.ppg_frames, history)
    }

    pub fn decode_offline(
        &self,
        ppg: &Tensor,
        speaker: usize,
        chunk_ms: usize,
        history: Option<usize>,
    ) -> Result<Tensor> {
        let g = ChunkGeometry::new(chunk_ms)?;
        self.decoder.offline(ppg, speaker, g.mel_frames, history)
    }

    /// Non-streaming conversion of a whole utterance with the same chunk
    /// masks and end-of-stream padding a streaming session applies.
    pub fn convert_offline(
        &self,
        fbank: &Tensor,
        speaker: usize,
        chunk_ms: usize,
        history: Option<usize>,
    ) -> Result<Tensor> {
        let padded = pad_for_flush(fbank)?;
        let ppg = self.encode_offline(&padded, chunk_ms, history)?;
        self.decode_offline(&ppg, speaker, chunk_ms, history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry() {
        let g = ChunkGeometry::new(160).unwrap();
        assert_eq!((g.fbank_frames, g.ppg_frames, g.mel_frames), (16, 4, 16));
        assert!(ChunkGeometry::new(50).is_err());
    }

    #[test]
    fn flush_padding_yields_every_ppg_frame() {
        for n in 1..40 {
            let t = flush_target(n);
            assert_eq!(subsample::outputs_for(t), n.div_ceil(4), "n={n}");
            assert!(t >= n);
        }
    }
}
