//! End-to-end streaming conversion: audio → fbank → encoder → decoder →
//! vocoder, with per-stage wall-clock timing.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acoustic::{AcousticModel, AcousticSession};
use crate::audio::FbankExtractor;
use crate::error::{Error, Result};
use crate::metrics::{latency_report, rtf, BenchRecord, LatencyReport, VocoderSpeedRecord};
use crate::model_io::{Model, RuntimeConfig, VocoderMode, HOP_SAMPLES, SAMPLE_RATE};
use crate::tensor::Tensor;
use crate::vocoder::{CrossfadeSpec, OverlapVocoder, Vocoder, VocoderSession};

/// Immutable runtime weights, shareable between converters.
#[derive(Debug, Clone)]
pub struct Engine {
    config: crate::model_io::ModelConfig,
    acoustic: AcousticModel,
    vocoder: Vocoder,
}

impl Engine {
    pub fn from_model(model: &Model) -> Result<Self> {
        Ok(Self {
            config: model.config().clone(),
            acoustic: AcousticModel::from_model(model)?,
            vocoder: Vocoder::from_model(model)?,
        })
    }

    pub fn acoustic(&self) -> &AcousticModel {
        &self.acoustic
    }

    pub fn vocoder(&self) -> &Vocoder {
        &self.vocoder
    }

    pub fn converter(&self, rt: &RuntimeConfig) -> Result<StreamingConverter<'_>> {
        rt.validate(&self.config)?;
        let voc = match rt.vocoder_mode {
            VocoderMode::MbsStreaming => VocoderStage::Streaming(self.vocoder.session()?),
            VocoderMode::MbOfflineCrossfade => VocoderStage::Crossfade(OverlapVocoder::new(
                &self.vocoder,
                CrossfadeSpec::new(rt.crossfade_n)?,
            )),
        };
        Ok(StreamingConverter {
            chunk_ms: rt.chunk_ms,
            fbank: FbankExtractor::new(),
            acoustic: self
                .acoustic
                .session(rt.speaker_id, rt.chunk_ms, rt.history_chunks)?,
            vocoder: voc,
            timings: Vec::new(),
            samples_in: 0,
            samples_out: 0,
            first_packet: None,
        })
    }
}

#[derive(Debug, Clone)]
enum VocoderStage<'e> {
    Streaming(VocoderSession<'e>),
    Crossfade(OverlapVocoder<'e>),
}

impl VocoderStage<'_> {
    fn push(&mut self, mel: &Tensor) -> Result<Vec<f32>> {
        if mel.rows() == 0 {
            return Ok(Vec::new());
        }
        match self {
            Self::Streaming(s) => s.push(mel),
            Self::Crossfade(o) => o.push(mel),
        }
    }

    fn finish(&mut self) -> Vec<f32> {
        match self {
            Self::Streaming(_) => Vec::new(),
            Self::Crossfade(o) => o.finish(),
        }
    }
}

/// Wall time spent in each stage during one `push`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub fbank: Duration,
    pub encoder: Duration,
    pub decoder: Duration,
    pub vocoder: Duration,
    pub ppg_frames: usize,
    pub mel_frames: usize,
    pub samples: usize,
}

/// Where the first audio appeared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FirstPacket {
    /// Input samples consumed when it was emitted.
    pub input_samples: usize,
    /// Fbank frames consumed by then.
    pub fbank_frames: usize,
}

#[derive(Debug, Clone)]
pub struct StreamingConverter<'e> {
    chunk_ms: usize,
    fbank: FbankExtractor,
    acoustic: AcousticSession<'e>,
    vocoder: VocoderStage<'e>,
    timings: Vec<StageTimes>,
    samples_in: usize,
    samples_out: usize,
    first_packet: Option<FirstPacket>,
}

impl StreamingConverter<'_> {
    fn run(&mut self, frames: Tensor, t0: Instant, flush: bool) -> Result<Vec<f32>> {
        let mut times = StageTimes {
            fbank: t0.elapsed(),
            ..StageTimes::default()
        };
        let t = Instant::now();
        let ppg = if flush {
            let mut ppg = self.acoustic.encode_frames(&frames)?;
            let rest = self.acoustic.flush_encoder()?;
            ppg = Tensor::concat_rows(&[ppg, rest])?;
            ppg
        } else {
            self.acoustic.encode_frames(&frames)?
        };
        times.encoder = t.elapsed();
        let t = Instant::now();
        let mel = if flush {
            self.acoustic.flush_decoder(&ppg)?
        } else {
            self.acoustic.decode_chunk(&ppg, self.acoustic.speaker())?
        };
        times.decoder = t.elapsed();
        let t = Instant::now();
        let mut audio = self.vocoder.push(&mel)?;
        if flush {
            audio.extend(self.vocoder.finish());
        }
        times.vocoder = t.elapsed();
        times.ppg_frames = ppg.rows();
        times.mel_frames = mel.rows();
        times.samples = audio.len();
        if self.first_packet.is_none() && !audio.is_empty() {
            self.first_packet = Some(FirstPacket {
                input_samples: self.samples_in,
                fbank_frames: self.acoustic.fbank_frames_consumed(),
            });
        }
        self.samples_out += audio.len();
        self.timings.push(times);
        Ok(audio)
    }

    /// Feeds input audio (16 kHz mono) and returns whatever output is ready.
    pub fn push(&mut self, samples: &[f32]) -> Result<Vec<f32>> {
        let t0 = Instant::now();
        self.samples_in += samples.len();
        let frames = self.fbank.push(samples);
        self.run(frames, t0, false)
    }

    /// End of input: flushes every stage.
    pub fn finish(&mut self) -> Result<Vec<f32>> {
        let t0 = Instant::now();
        let frames = self.fbank.finish();
        self.run(frames, t0, true)
    }

    pub fn timings(&self) -> &[StageTimes] {
        &self.timings
    }

    pub fn first_packet(&self) -> Option<FirstPacket> {
        self.first_packet
    }

    pub fn samples_in(&self) -> usize {
        self.samples_in
    }

    pub fn samples_out(&self) -> usize {
        self.samples_out
    }

    /// Latency accounting from the median stage times of the pushes that
    /// completed a full chunk.
    pub fn latency_report(&self) -> Result<LatencyReport> {
        let full: Vec<&StageTimes> = self
            .timings
            .iter()
            .filter(|t| t.ppg_frames > 0 && t.mel_frames > 0)
            .collect();
        if full.is_empty() {
            return latency_report(self.chunk_ms as f64, 0.0, 0.0, 0.0);
        }
        let med = |f: fn(&StageTimes) -> Duration| median_ms(full.iter().map(|t| f(t)));
        latency_report(
            self.chunk_ms as f64,
            med(|t| t.encoder),
            med(|t| t.decoder),
            med(|t| t.vocoder),
        )
    }
}

fn median_ms(it: impl Iterator<Item = Duration>) -> f64 {
    let mut v: Vec<f64> = it.map(|d| d.as_secs_f64() * 1e3).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Converts a whole signal, feeding it in `chunk_ms` pieces.
pub fn convert(
    engine: &Engine,
    rt: &RuntimeConfig,
    samples: &[f32],
) -> Result<(Vec<f32>, LatencyReport)> {
    let mut conv = engine.converter(rt)?;
    let step = rt.chunk_ms * SAMPLE_RATE as usize / 1000;
    let mut out = Vec::with_capacity(samples.len() + step);
    for piece in samples.chunks(step) {
        out.extend(conv.push(piece)?);
    }
    out.extend(conv.finish()?);
    Ok((out, conv.latency_report()?))
}

/// Deterministic test signal: a gliding tone plus low-level noise.
pub fn synthetic_audio(seconds: f64, seed: u64) -> Vec<f32> {
    let n = (seconds * SAMPLE_RATE as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phase = 0.0f64;
    (0..n)
        .map(|i| {
            let f = 120.0 + 80.0 * (i as f64 / SAMPLE_RATE as f64 * 1.3).sin();
            phase += 2.0 * std::f64::consts::PI * f / SAMPLE_RATE as f64;
            (0.4 * phase.sin() + 0.02 * rng.gen_range(-1.0..1.0)) as f32
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub chunk_ms: Vec<usize>,
    pub seconds: f64,
    pub device_label: String,
    pub model_label: String,
    pub seed: u64,
    pub history_chunks: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub records: Vec<BenchRecord>,
    pub vocoder: VocoderSpeedRecord,
}

/// Runs each chunk size on the same synthetic input, one session at a
/// time, then times the streaming vocoder frame by frame.
pub fn bench(engine: &Engine, opts: &BenchOptions) -> Result<BenchOutput> {
    if !(opts.seconds.is_finite() && opts.seconds > 0.0) {
        return Err(Error::Config(format!(
            "--seconds must be positive, got {}",
            opts.seconds
        )));
    }
    if opts.chunk_ms.is_empty() {
        return Err(Error::Config("no chunk sizes to benchmark".into()));
    }
    let audio = synthetic_audio(opts.seconds, opts.seed);
    let vocoder = measure_vocoder(engine, &audio, opts)?;
    let mut records = Vec::with_capacity(opts.chunk_ms.len());
    for &chunk_ms in &opts.chunk_ms {
        let rt = RuntimeConfig {
            chunk_ms,
            history_chunks: opts.history_chunks,
            ..RuntimeConfig::default()
        };
        let (_, report) = convert(engine, &rt, &audio)?;
        records.push(BenchRecord::new(
            &opts.model_label,
            &opts.device_label,
            &report,
            vocoder.rtf,
        ));
    }
    Ok(BenchOutput { records, vocoder })
}

fn measure_vocoder(
    engine: &Engine,
    audio: &[f32],
    opts: &BenchOptions,
) -> Result<VocoderSpeedRecord> {
    let mel = engine.acoustic().convert_offline(
        &crate::audio::fbank(audio),
        0,
        crate::model_io::DEFAULT_CHUNK_MS,
        opts.history_chunks,
    )?;
    let mut session = engine.vocoder().session()?;
    let t = Instant::now();
    let mut n = 0;
    for i in 0..mel.rows() {
        n += session.push_frame(mel.row(i))?.len();
    }
    let compute = t.elapsed().as_secs_f64();
    let audio_seconds = n as f64 / SAMPLE_RATE as f64;
    Ok(VocoderSpeedRecord {
        model: format!("{} MBS vocoder", opts.model_label),
        device_label: opts.device_label.clone(),
        audio_seconds,
        compute_seconds: compute,
        rtf: rtf(compute, audio_seconds)?,
    })
}

/// Output samples for `n` input samples: every started 40 ms of input
/// yields 40 ms of output.
pub fn expected_output_len(n: usize) -> usize {
    let frames = n.div_ceil(HOP_SAMPLES);
    frames.div_ceil(crate::model_io::SUBSAMPLE) * crate::model_io::SUBSAMPLE * HOP_SAMPLES
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::{random_init, ModelConfig};

    fn engine() -> Engine {
        Engine::from_model(&random_init(&ModelConfig::tiny(), 11).unwrap()).unwrap()
    }

    #[test]
    fn one_second_in_one_second_out() {
        let e = engine();
        let rt = RuntimeConfig {
            chunk_ms: 80,
            ..RuntimeConfig::default()
        };
        let (y, report) = convert(&e, &rt, &vec![0.0; 16000]).unwrap();
        assert_eq!(y.len(), 16000);
        assert!(y.iter().all(|s| s.is_finite() && s.abs() <= 1.0));
        assert_eq!(report.chunk_ms, 80.0);
    }

    #[test]
    fn lengths_follow_40ms_units() {
        let e = engine();
        for n in [1, 159, 161, 1000, 7000] {
            let (y, _) = convert(
                &e,
                &RuntimeConfig::default(),
                &synthetic_audio(n as f64 / 16000.0, 1),
            )
            .unwrap();
            assert_eq!(y.len(), expected_output_len(n), "{n}");
        }
    }

    #[test]
    fn deterministic() {
        let e = engine();
        let x = synthetic_audio(0.5, 4);
        let rt = RuntimeConfig::default();
        assert_eq!(
            convert(&e, &rt, &x).unwrap().0,
            convert(&e, &rt, &x).unwrap().0
        );
    }

    #[test]
    fn crossfade_mode_keeps_length() {
        let e = engine();
        let rt = RuntimeConfig {
            chunk_ms: 40,
            vocoder_mode: VocoderMode::MbOfflineCrossfade,
            ..RuntimeConfig::default()
        };
        let (y, _) = convert(&e, &rt, &synthetic_audio(0.6, 2)).unwrap();
        assert_eq!(y.len(), 9600);
    }

    #[test]
    fn streaming_matches_offline_pipeline() {
        let e = engine();
        let x = synthetic_audio(0.8, 9);
        let rt = RuntimeConfig {
            chunk_ms: 120,
            ..RuntimeConfig::default()
        };
        let (y, _) = convert(&e, &rt, &x).unwrap();
        let mel = e
            .acoustic()
            .convert_offline(&crate::audio::fbank(&x), 0, 120, Some(10))
            .unwrap();
        let want = e.vocoder().generate_offline(&mel).unwrap();
        let diff = y
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert_eq!(y.len(), want.len());
        assert!(diff < 1e-3, "{diff}");
    }

    #[test]
    fn bench_rejects_zero_seconds() {
        let e = engine();
        let opts = BenchOptions {
            chunk_ms: vec![40],
            seconds: 0.0,
            device_label: "cpu".into(),
            model_label: "tiny".into(),
            seed: 0,
            history_chunks: Some(10),
        };
        assert!(matches!(bench(&e, &opts), Err(Error::Config(_))));
    }
}
