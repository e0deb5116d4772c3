use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pqmf::PqmfParams;

pub const SAMPLE_RATE: u32 = 16_000;
pub const HOP_SAMPLES: usize = 160;
pub const N_MELS: usize = 80;
/// Fbank frames per PPG frame (two stride-2 convolutions).
pub const SUBSAMPLE: usize = 4;
/// Fbank frames per 40 ms input unit.
pub const FRAMES_PER_40MS: usize = 4;
pub const DEFAULT_CHUNK_MS: usize = 160;
pub const DEFAULT_HISTORY_CHUNKS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Number of phonetic classes `P`.
    pub ppg_dim: usize,
    /// Apply softmax to the output projection.
    pub ppg_softmax: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 6,
            d_model: 256,
            heads: 4,
            ff_dim: 1024,
            ppg_dim: 212,
            ppg_softmax: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Kernel of the first (causal) convolution in each FFT block.
    pub conv_kernel: usize,
    pub speakers: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            d_model: 256,
            heads: 4,
            ff_dim: 1024,
            conv_kernel: 3,
            speakers: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocoderConfig {
    pub upsample_factors: Vec<usize>,
    pub upsample_kernel_sizes: Vec<usize>,
    pub initial_channels: usize,
    pub resblock_kernel_sizes: Vec<usize>,
    pub resblock_dilations: Vec<Vec<usize>>,
    pub pre_kernel: usize,
    pub post_kernel: usize,
    pub leaky_slope: f32,
    pub pqmf: PqmfParams,
    pub causal: bool,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            upsample_factors: vec![5, 4, 2],
            upsample_kernel_sizes: vec![11, 9, 5],
            initial_channels: 128,
            resblock_kernel_sizes: vec![3, 7, 11],
            resblock_dilations: vec![vec![1, 3, 5]; 3],
            pre_kernel: 7,
            post_kernel: 7,
            leaky_slope: 0.1,
            pqmf: PqmfParams::default(),
            causal: true,
        }
    }
}

impl VocoderConfig {
    /// Channels entering upsampling stage `i`, and after the last stage.
    pub fn stage_channels(&self) -> Vec<usize> {
        (0..=self.upsample_factors.len())
            .map(|i| self.initial_channels >> i)
            .collect()
    }

    pub fn samples_per_frame(&self) -> usize {
        self.upsample_factors.iter().product::<usize>() * self.pqmf.num_bands
    }

    pub fn validate(&self, hop: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("vocoder: {m}")));
        if self.upsample_factors.is_empty() || self.upsample_factors.contains(&0) {
            return bad("upsample factors must be positive".into());
        }
        if self.upsample_kernel_sizes.len() != self.upsample_factors.len() {
            return bad("one upsample kernel per factor".into());
        }
        if self.samples_per_frame() != hop {
            return bad(format!(
                "factors x bands = {} samples per frame, hop is {hop}",
                self.samples_per_frame()
            ));
        }
        if self.resblock_kernel_sizes.is_empty()
            || self.resblock_kernel_sizes.len() != self.resblock_dilations.len()
        {
            return bad("one dilation list per resblock kernel".into());
        }
        if self
            .resblock_dilations
            .iter()
            .any(|d| d.is_empty() || d.contains(&0))
        {
            return bad("dilations must be non-empty and positive".into());
        }
        let last = self.initial_channels >> self.upsample_factors.len();
        if last == 0 || last << self.upsample_factors.len() != self.initial_channels {
            return bad(format!(
                "initial channels {} must halve cleanly {} times",
                self.initial_channels,
                self.upsample_factors.len()
            ));
        }
        let kernels = self
            .upsample_kernel_sizes
            .iter()
            .chain(&self.resblock_kernel_sizes)
            .chain([&self.pre_kernel, &self.post_kernel]);
        for &k in kernels {
            if k == 0 || k % 2 == 0 {
                return bad(format!("kernel size {k} must be odd"));
            }
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky slope must be finite".into());
        }
        self.pqmf.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub sample_rate: u32,
    pub hop_samples: usize,
    pub n_mels: usize,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub vocoder: VocoderConfig,
    pub default_chunk_ms: usize,
    pub default_history_chunks: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            hop_samples: HOP_SAMPLES,
            n_mels: N_MELS,
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            vocoder: VocoderConfig::default(),
            default_chunk_ms: DEFAULT_CHUNK_MS,
            default_history_chunks: DEFAULT_HISTORY_CHUNKS,
        }
    }
}

impl ModelConfig {
    /// A narrow configuration for fast tests; same topology as the default.
    pub fn tiny() -> Self {
        Self {
            encoder: EncoderConfig {
                layers: 2,
                d_model: 32,
                heads: 4,
                ff_dim: 64,
                ppg_dim: 24,
                ppg_softmax: true,
            },
            decoder: DecoderConfig {
                layers: 2,
                d_model: 32,
                heads: 4,
                ff_dim: 64,
                conv_kernel: 3,
                speakers: 4,
            },
            vocoder: VocoderConfig {
                initial_channels: 32,
                resblock_kernel_sizes: vec![3, 5],
                resblock_dilations: vec![vec![1, 3]; 2],
                ..VocoderConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE || self.hop_samples != HOP_SAMPLES {
            return Err(Error::Config(format!(
                "runtime is fixed to {SAMPLE_RATE} Hz with a {HOP_SAMPLES}-sample hop"
            )));
        }
        if self.n_mels != N_MELS {
            return Err(Error::Config(format!("n_mels must be {N_MELS}")));
        }
        let e = &self.encoder;
        if e.layers == 0
            || e.heads == 0
            || !e.d_model.is_multiple_of(e.heads)
            || e.ff_dim == 0
            || e.ppg_dim == 0
        {
            return Err(Error::Config(format!("encoder: {e:?}")));
        }
        let d = &self.decoder;
        if d.layers == 0
            || d.heads == 0
            || !d.d_model.is_multiple_of(d.heads)
            || d.ff_dim == 0
            || d.conv_kernel == 0
            || d.speakers == 0
        {
            return Err(Error::Config(format!("decoder: {d:?}")));
        }
        validate_chunk_ms(self.default_chunk_ms)?;
        self.vocoder.validate(self.hop_samples)
    }
}

pub fn validate_chunk_ms(chunk_ms: usize) -> Result<()> {
    if chunk_ms == 0 || !chunk_ms.is_multiple_of(40) {
        return Err(Error::InvalidChunk(format!(
            "chunk of {chunk_ms} ms must be a positive multiple of 40 ms"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocoderMode {
    /// Causal generator driven frame by frame.
    MbsStreaming,
    /// Non-causal generator on mel chunks joined with a Hann crossfade.
    MbOfflineCrossfade,
}

impl std::str::FromStr for VocoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mbs_streaming" => Ok(Self::MbsStreaming),
            "mb_offline_crossfade" => Ok(Self::MbOfflineCrossfade),
            other => Err(Error::Config(format!(
                "unknown vocoder mode `{other}` (mbs_streaming | mb_offline_crossfade)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeConfig {
    pub chunk_ms: usize,
    /// `None` keeps unlimited history.
    pub history_chunks: Option<usize>,
    pub speaker_id: usize,
    pub vocoder_mode: VocoderMode,
    pub crossfade_n: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            chunk_ms: DEFAULT_CHUNK_MS,
            history_chunks: Some(DEFAULT_HISTORY_CHUNKS),
            speaker_id: 0,
            vocoder_mode: VocoderMode::MbsStreaming,
            crossfade_n: 161,
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        validate_chunk_ms(self.chunk_ms)?;
        if self.speaker_id >= model.decoder.speakers {
            return Err(Error::InvalidSpeaker {
                id: self.speaker_id,
                speakers: model.decoder.speakers,
            });
        }
        if self.vocoder_mode == VocoderMode::MbOfflineCrossfade
            && (self.crossfade_n < 3 || self.crossfade_n.is_multiple_of(2))
        {
            return Err(Error::InvalidLength(self.crossfade_n));
        }
        Ok(())
    }

    /// Fbank frames per chunk.
    pub fn chunk_frames(&self) -> usize {
        self.chunk_ms / 10
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
        assert_eq!(VocoderConfig::default().samples_per_frame(), 160);
    }

    #[test]
    fn chunk_must_be_multiple_of_40() {
        for ms in [40, 80, 120, 160, 200] {
            validate_chunk_ms(ms).unwrap();
        }
        let err = validate_chunk_ms(50).unwrap_err().to_string();
        assert!(err.contains("multiple of 40 ms"), "{err}");
        assert!(validate_chunk_ms(0).is_err());
    }

    #[test]
    fn vocoder_hop_mismatch() {
        let mut c = ModelConfig::default();
        c.vocoder.upsample_factors = vec![5, 4, 4];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn runtime_speaker_range() {
        let m = ModelConfig::default();
        let r = RuntimeConfig {
            speaker_id: 8,
            ..RuntimeConfig::default()
        };
        assert!(matches!(r.validate(&m), Err(Error::InvalidSpeaker { .. })));
    }

    #[test]
    fn config_json_round_trip() {
        let c = ModelConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
        let mode: VocoderMode = "mb_offline_crossfade".parse().unwrap();
        assert_eq!(mode, VocoderMode::MbOfflineCrossfade);
    }
}
