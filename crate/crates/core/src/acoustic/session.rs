use crate::error::{Error, Result};
use crate::model_io::{FRAMES_PER_40MS, N_MELS};
use crate::nn::AttnCache;
use crate::tensor::Tensor;

use super::decoder::BlockCache;
use super::subsample::SubsampleState;
use super::{flush_target, AcousticModel, ChunkGeometry};

/// Per-stream state of the acoustic model.
///
/// Encoder and decoder each run attention over whole chunks only; frames
/// that do not yet fill a chunk wait in a pending buffer. The speaker is
/// fixed for the session's lifetime.
#[derive(Debug, Clone)]
pub struct AcousticSession<'m> {
    model: &'m AcousticModel,
    speaker: usize,
    geometry: ChunkGeometry,
    history: Option<usize>,
    subsample: SubsampleState,
    last_frame: Option<Vec<f32>>,
    enc_pending: Vec<f32>,
    enc_caches: Vec<AttnCache>,
    ppg_emitted: usize,
    dec_pending: Vec<f32>,
    dec_caches: Vec<BlockCache>,
    ppg_decoded: usize,
    mel_emitted: usize,
}

impl<'m> AcousticSession<'m> {
    pub fn new(
        model: &'m AcousticModel,
        speaker: usize,
        chunk_ms: usize,
        history: Option<usize>,
    ) -> Result<Self> {
        model.decoder().check_speaker(speaker)?;
        let geometry = ChunkGeometry::new(chunk_ms)?;
        let enc = model.encoder();
        let width = model.subsampler().width();
        Ok(Self {
            model,
            speaker,
            geometry,
            history,
            subsample: SubsampleState::default(),
            last_frame: None,
            enc_pending: Vec::new(),
            enc_caches: (0..enc.num_layers())
                .map(|_| AttnCache::new(width, enc.heads(), history))
                .collect(),
            ppg_emitted: 0,
            dec_pending: Vec::new(),
            dec_caches: model.decoder().new_caches(history),
            ppg_decoded: 0,
            mel_emitted: 0,
        })
    }

    pub fn geometry(&self) -> ChunkGeometry {
        self.geometry
    }

    pub fn speaker(&self) -> usize {
        self.speaker
    }

    pub fn history(&self) -> Option<usize> {
        self.history
    }

    pub fn fbank_frames_consumed(&self) -> usize {
        self.subsample.frames_consumed()
    }

    pub fn ppg_frames_emitted(&self) -> usize {
        self.ppg_emitted
    }

    pub fn mel_frames_emitted(&self) -> usize {
        self.mel_emitted
    }

    /// Largest key/value history held by any attention layer, in frames of
    /// that layer's rate, with the matching chunk size.
    pub fn attention_cache_frames(&self) -> (usize, usize, usize, usize) {
        let enc = self
            .enc_caches
            .iter()
            .map(AttnCache::frames)
            .max()
            .unwrap_or(0);
        let dec = self
            .dec_caches
            .iter()
            .map(|c| c.attn.frames())
            .max()
            .unwrap_or(0);
        (enc, self.geometry.ppg_frames, dec, self.geometry.mel_frames)
    }

    fn ppg_dim(&self) -> usize {
        self.model.encoder().ppg_dim()
    }

    fn run_encoder(&mut self, flush: bool) -> Result<Tensor> {
        let width = self.model.subsampler().width();
        let chunk = self.geometry.ppg_frames;
        let mut out = Vec::new();
        loop {
            let pending = self.enc_pending.len() / width;
            let take = if pending >= chunk {
                chunk
            } else if flush && pending > 0 {
                pending
            } else {
                break;
            };
            let rows: Vec<f32> = self.enc_pending.drain(..take * width).collect();
            let x = Tensor::new(vec![take, width], rows)?;
            let y = self
                .model
                .encoder()
                .step(x, self.ppg_emitted, &mut self.enc_caches)?;
            self.ppg_emitted += take;
            out.push(y);
        }
        if out.is_empty() {
            return Ok(Tensor::zeros(&[0, self.ppg_dim()]));
        }
        Tensor::concat_rows(&out)
    }

    fn run_decoder(&mut self, flush: bool) -> Result<Tensor> {
        let p = self.ppg_dim();
        let chunk = self.geometry.ppg_frames;
        let mut out = Vec::new();
        loop {
            let pending = self.dec_pending.len() / p;
            let take = if pending >= chunk {
                chunk
            } else if flush && pending > 0 {
                pending
            } else {
                break;
            };
            let rows: Vec<f32> = self.dec_pending.drain(..take * p).collect();
            let x = Tensor::new(vec![take, p], rows)?;
            let y = self.model.decoder().step(
                &x,
                self.speaker,
                self.mel_emitted,
                &mut self.dec_caches,
            )?;
            self.ppg_decoded += take;
            self.mel_emitted += y.rows();
            out.push(y);
        }
        if out.is_empty() {
            return Ok(Tensor::zeros(&[0, N_MELS]));
        }
        Tensor::concat_rows(&out)
    }

    fn feed_encoder(&mut self, frames: &Tensor) -> Result<()> {
        let n = frames.expect_2d("fbank chunk", N_MELS)?;
        if !frames.all_finite() {
            return Err(Error::NonFinite("fbank input".into()));
        }
        if n > 0 {
            self.last_frame = Some(frames.row(n - 1).to_vec());
        }
        let sub = self.model.subsampler().push(&mut self.subsample, frames)?;
        self.enc_pending.extend_from_slice(sub.data());
        Ok(())
    }

    /// Encoder only: takes a chunk of whole 40 ms units and returns the PPG
    /// frames that completed an attention chunk.
    pub fn encode_chunk(&mut self, frames: &Tensor) -> Result<Tensor> {
        let n = frames.expect_2d("fbank chunk", N_MELS)?;
        if n == 0 || n % FRAMES_PER_40MS != 0 {
            return Err(Error::InvalidChunk(format!(
                "{n} fbank frames is not a positive multiple of 40 ms"
            )));
        }
        self.feed_encoder(frames)?;
        self.run_encoder(false)
    }

    /// Decoder only: 4 mel frames per PPG frame, emitted a chunk at a time.
    pub fn decode_chunk(&mut self, ppgs: &Tensor, speaker: usize) -> Result<Tensor> {
        self.model.decoder().check_speaker(speaker)?;
        if speaker != self.speaker {
            return Err(Error::ContractViolation(format!(
                "session speaker is {}, got {speaker}",
                self.speaker
            )));
        }
        ppgs.expect_2d("ppg chunk", self.ppg_dim())?;
        self.dec_pending.extend_from_slice(ppgs.data());
        self.run_decoder(false)
    }

    /// Encode then decode one chunk of fbank frames.
    pub fn process_chunk(&mut self, frames: &Tensor) -> Result<Tensor> {
        let ppg = self.encode_chunk(frames)?;
        self.decode_chunk(&ppg, self.speaker)
    }

    /// Encoder only, any number of fbank frames: returns the PPG frames of
    /// every attention chunk completed so far.
    pub fn encode_frames(&mut self, frames: &Tensor) -> Result<Tensor> {
        self.feed_encoder(frames)?;
        self.run_encoder(false)
    }

    /// Feeds any number of fbank frames (no chunk-size check); mel frames
    /// come out as soon as a decoder chunk completes.
    pub fn push_frames(&mut self, frames: &Tensor) -> Result<Tensor> {
        let ppg = self.encode_frames(frames)?;
        self.decode_chunk(&ppg, self.speaker)
    }

    /// End of input for the encoder: pads so every started 40 ms unit
    /// produces its PPG frame, then runs the partial final chunk.
    pub fn flush_encoder(&mut self) -> Result<Tensor> {
        let consumed = self.subsample.frames_consumed();
        if let Some(last) = self.last_frame.clone() {
            let pad = flush_target(consumed) - consumed;
            if pad > 0 {
                let rows: Vec<f32> = last.iter().copied().cycle().take(pad * N_MELS).collect();
                let sub = self
                    .model
                    .subsampler()
                    .push(&mut self.subsample, &Tensor::new(vec![pad, N_MELS], rows)?)?;
                self.enc_pending.extend_from_slice(sub.data());
            }
        }
        self.run_encoder(true)
    }

    /// Runs whatever PPG frames the decoder still holds (after adding `ppg`).
    pub fn flush_decoder(&mut self, ppg: &Tensor) -> Result<Tensor> {
        ppg.expect_2d("ppg chunk", self.ppg_dim())?;
        self.dec_pending.extend_from_slice(ppg.data());
        self.run_decoder(true)
    }

    /// End of stream: both flushes.
    pub fn finish(&mut self) -> Result<Tensor> {
        let ppg = self.flush_encoder()?;
        self.flush_decoder(&ppg)
    }

    /// Back to the state of a fresh session with the same settings.
    pub fn reset(&mut self) {
        self.subsample.reset();
        self.last_frame = None;
        self.enc_pending.clear();
        self.enc_caches.iter_mut().for_each(AttnCache::clear);
        self.ppg_emitted = 0;
        self.dec_pending.clear();
        self.dec_caches.iter_mut().for_each(BlockCache::reset);
        self.ppg_decoded = 0;
        self.mel_emitted = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::{random_init, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> AcousticModel {
        AcousticModel::from_model(&random_init(&ModelConfig::tiny(), 3).unwrap()).unwrap()
    }

    fn fbank(n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(
            vec![n, N_MELS],
            (0..n * N_MELS).map(|_| rng.gen_range(-4.0..2.0)).collect(),
        )
        .unwrap()
    }

    fn rel_diff(a: &Tensor, b: &Tensor) -> f32 {
        let scale = b
            .data()
            .iter()
            .fold(0.0f32, |m, v| m.max(v.abs()))
            .max(1e-12);
        a.max_abs_diff(b) / scale
    }

    #[test]
    fn ppg_rows_are_distributions() {
        let m = model();
        let mut s = m.session(0, 40, Some(10)).unwrap();
        let x = fbank(40, 1);
        let mut rows = 0;
        for c in 0..10 {
            let ppg = s.encode_chunk(&x.slice_rows(c * 4, c * 4 + 4)).unwrap();
            for r in 0..ppg.rows() {
                let row = ppg.row(r);
                assert!(row.iter().all(|p| *p >= 0.0));
                assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
            }
            rows += ppg.rows();
        }
        assert_eq!(rows, 9);
    }

    #[test]
    fn chunk_must_be_whole_40ms_units() {
        let m = model();
        let mut s = m.session(0, 40, None).unwrap();
        assert!(matches!(
            s.encode_chunk(&fbank(5, 0)),
            Err(Error::InvalidChunk(_))
        ));
    }

    #[test]
    fn encoder_streaming_matches_offline() {
        let m = model();
        let x = fbank(5 * 16, 2);
        let offline = m.encode_offline(&x, 160, Some(10)).unwrap();
        let mut s = m.session(0, 160, Some(10)).unwrap();
        let mut parts = Vec::new();
        for c in 0..5 {
            parts.push(s.encode_chunk(&x.slice_rows(c * 16, c * 16 + 16)).unwrap());
        }
        let streamed = Tensor::concat_rows(&parts).unwrap();
        assert!(streamed.rows() > 0);
        assert!(rel_diff(&streamed, &offline.slice_rows(0, streamed.rows())) <= 1e-4);
    }

    #[test]
    fn one_ppg_gives_four_mels() {
        let m = model();
        let mut s = m.session(1, 40, Some(10)).unwrap();
        let mut ppg = vec![0.0; m.encoder().ppg_dim()];
        ppg[3] = 1.0;
        let mel = s
            .decode_chunk(&Tensor::new(vec![1, ppg.len()], ppg).unwrap(), 1)
            .unwrap();
        assert_eq!(mel.shape(), &[4, N_MELS]);
    }

    #[test]
    fn speakers_change_output() {
        let m = model();
        let ppg = m.encode_offline(&fbank(31, 3), 40, None).unwrap();
        let a = m.decode_offline(&ppg, 0, 40, None).unwrap();
        let b = m.decode_offline(&ppg, 1, 40, None).unwrap();
        assert!(a.max_abs_diff(&b) > 1e-3);
    }

    #[test]
    fn speaker_errors() {
        let m = model();
        assert!(matches!(
            m.session(99, 40, None),
            Err(Error::InvalidSpeaker { .. })
        ));
        let mut s = m.session(0, 40, None).unwrap();
        let ppg = Tensor::zeros(&[1, m.encoder().ppg_dim()]);
        assert!(matches!(
            s.decode_chunk(&ppg, 1),
            Err(Error::ContractViolation(_))
        ));
        assert!(matches!(
            s.decode_chunk(&ppg, 99),
            Err(Error::InvalidSpeaker { .. })
        ));
    }

    #[test]
    fn reset_matches_fresh_session() {
        let m = model();
        let x = fbank(32, 4);
        let mut fresh = m.session(0, 80, Some(2)).unwrap();
        let want = fresh.process_chunk(&x.slice_rows(0, 8)).unwrap();
        let mut s = m.session(0, 80, Some(2)).unwrap();
        for c in 0..4 {
            s.process_chunk(&x.slice_rows(c * 8, c * 8 + 8)).unwrap();
        }
        s.reset();
        s.reset();
        assert_eq!(s.mel_frames_emitted(), 0);
        assert_eq!(s.process_chunk(&x.slice_rows(0, 8)).unwrap(), want);
    }

    #[test]
    fn mel_count_is_four_times_ppg() {
        let m = model();
        let x = fbank(43, 5);
        let mut s = m.session(0, 120, Some(10)).unwrap();
        for c in 0..3 {
            s.process_chunk(&x.slice_rows(c * 12, c * 12 + 12)).unwrap();
            assert_eq!(s.mel_frames_emitted(), 4 * s.ppg_frames_emitted());
        }
        s.push_frames(&x.slice_rows(36, 43)).unwrap();
        s.finish().unwrap();
        assert_eq!(s.ppg_frames_emitted(), 11);
        assert_eq!(s.mel_frames_emitted(), 44);
    }
}
