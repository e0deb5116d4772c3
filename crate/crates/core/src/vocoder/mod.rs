//! Multi-band generator: mel frames are upsampled to `K` subband signals,
//! which PQMF synthesis merges into the waveform.
//!
//! With a causal config every convolution only looks back, so the same
//! weights can run frame by frame through [`VocoderSession`].

mod crossfade;

pub use crossfade::{
    crossfade_join, generate_chunked, hann_window, joint_discontinuity, CrossfadeSpec, HannWindow,
    JointStats, OverlapVocoder,
};

use crate::error::{Error, Result};
use crate::model_io::{Model, VocoderConfig, N_MELS};
use crate::nn::{
    leaky_relu_inplace, nearest_upsample_tm, tanh_inplace, Conv1d, ConvCache, ConvSpec, Padding,
};
use crate::pqmf::{design_bank, PqmfBank, PqmfSynthesizer};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
struct ResBlock {
    convs1: Vec<Conv1d>,
    convs2: Vec<Conv1d>,
}

#[derive(Debug, Clone)]
struct Stage {
    factor: usize,
    up: Conv1d,
    resblocks: Vec<ResBlock>,
}

/// Which convolution routine to run: whole-sequence, or one step against
/// a cache per layer (visited in a fixed order).
enum Runner<'a> {
    Offline,
    Stream(std::slice::IterMut<'a, ConvCache>),
}

impl Runner<'_> {
    fn conv(&mut self, conv: &Conv1d, x: &Tensor) -> Result<Tensor> {
        match self {
            Runner::Offline => conv.forward_tm(x),
            Runner::Stream(caches) => {
                let cache = caches
                    .next()
                    .ok_or_else(|| Error::Shape("vocoder cache list too short".into()))?;
                conv.step_tm(x, cache)
            }
        }
    }
}

fn add_into(x: &mut Tensor, y: &Tensor) {
    for (v, a) in x.data_mut().iter_mut().zip(y.data()) {
        *v += a;
    }
}

#[derive(Debug, Clone)]
pub struct Vocoder {
    config: VocoderConfig,
    pre: Conv1d,
    stages: Vec<Stage>,
    post: Conv1d,
    pqmf: PqmfBank,
}

impl Vocoder {
    pub fn from_model(model: &Model) -> Result<Self> {
        let cfg = model.config().vocoder.clone();
        let padding = if cfg.causal {
            Padding::Causal
        } else {
            Padding::Same
        };
        let conv = |name: &str, cin, cout, k, dilation| -> Result<Conv1d> {
            Conv1d::new(
                ConvSpec::causal(cin, cout, k, dilation).with_padding(padding),
                model.tensor(&format!("{name}.weight"))?,
                model.tensor(&format!("{name}.bias"))?,
            )
        };
        let ch = cfg.stage_channels();
        let pre = conv("vocoder.conv_pre", N_MELS, ch[0], cfg.pre_kernel, 1)?;
        let mut stages = Vec::with_capacity(cfg.upsample_factors.len());
        for (i, (&factor, &k)) in cfg
            .upsample_factors
            .iter()
            .zip(&cfg.upsample_kernel_sizes)
            .enumerate()
        {
            let c = ch[i + 1];
            let resblocks = cfg
                .resblock_kernel_sizes
                .iter()
                .zip(&cfg.resblock_dilations)
                .enumerate()
                .map(|(j, (&rk, dils))| {
                    let p = format!("vocoder.resblocks.{i}.{j}");
                    let mut convs1 = Vec::with_capacity(dils.len());
                    let mut convs2 = Vec::with_capacity(dils.len());
                    for (l, &d) in dils.iter().enumerate() {
                        convs1.push(conv(&format!("{p}.convs1.{l}"), c, c, rk, d)?);
                        convs2.push(conv(&format!("{p}.convs2.{l}"), c, c, rk, 1)?);
                    }
                    Ok(ResBlock { convs1, convs2 })
                })
                .collect::<Result<Vec<_>>>()?;
            stages.push(Stage {
                factor,
                up: conv(&format!("vocoder.ups.{i}"), ch[i], c, k, 1)?,
                resblocks,
            });
        }
        let post = conv(
            "vocoder.conv_post",
            ch[cfg.upsample_factors.len()],
            cfg.pqmf.num_bands,
            cfg.post_kernel,
            1,
        )?;
        let pqmf = design_bank(cfg.pqmf)?;
        Ok(Self {
            config: cfg,
            pre,
            stages,
            post,
            pqmf,
        })
    }

    pub fn config(&self) -> &VocoderConfig {
        &self.config
    }

    pub fn is_causal(&self) -> bool {
        self.config.causal
    }

    /// Output samples per mel frame.
    pub fn hop(&self) -> usize {
        self.config.samples_per_frame()
    }

    pub fn pqmf(&self) -> &PqmfBank {
        &self.pqmf
    }

    fn convs(&self) -> impl Iterator<Item = &Conv1d> {
        std::iter::once(&self.pre)
            .chain(self.stages.iter().flat_map(|s| {
                std::iter::once(&s.up).chain(
                    s.resblocks
                        .iter()
                        .flat_map(|r| r.convs1.iter().zip(&r.convs2).flat_map(|(a, b)| [a, b])),
                )
            }))
            .chain(std::iter::once(&self.post))
    }

    /// Mel `[T, 80]` to subbands `[T * prod(factors), K]`, after tanh.
    fn subbands(&self, mel: &Tensor, runner: &mut Runner<'_>) -> Result<Tensor> {
        let slope = self.config.leaky_slope;
        let mut x = runner.conv(&self.pre, mel)?;
        for stage in &self.stages {
            leaky_relu_inplace(x.data_mut(), slope);
            let up = nearest_upsample_tm(&x, stage.factor)?;
            x = runner.conv(&stage.up, &up)?;
            let mut acc: Option<Tensor> = None;
            for rb in &stage.resblocks {
                let mut h = x.clone();
                for (c1, c2) in rb.convs1.iter().zip(&rb.convs2) {
                    let mut t = h.clone();
                    leaky_relu_inplace(t.data_mut(), slope);
                    let mut t = runner.conv(c1, &t)?;
                    leaky_relu_inplace(t.data_mut(), slope);
                    let mut t = runner.conv(c2, &t)?;
                    add_into(&mut t, &h);
                    h = t;
                }
                match acc.as_mut() {
                    Some(a) => add_into(a, &h),
                    None => acc = Some(h),
                }
            }
            x = acc.expect("at least one resblock");
            let n = stage.resblocks.len() as f32;
            x.data_mut().iter_mut().for_each(|v| *v /= n);
        }
        leaky_relu_inplace(x.data_mut(), slope);
        let mut y = runner.conv(&self.post, &x)?;
        tanh_inplace(y.data_mut());
        Ok(y)
    }

    fn check_mel(mel: &Tensor) -> Result<usize> {
        let t = mel.expect_2d("mel input", N_MELS)?;
        if !mel.all_finite() {
            return Err(Error::NonFinite("mel input".into()));
        }
        Ok(t)
    }

    /// Whole-utterance generation: `T` frames give `T * hop` samples in
    /// `[-1, 1]`.
    pub fn generate_offline(&self, mel: &Tensor) -> Result<Vec<f32>> {
        if Self::check_mel(mel)? == 0 {
            return Err(Error::EmptyInput);
        }
        let sub = self.subbands(mel, &mut Runner::Offline)?;
        let mut y = self.pqmf.synthesis_tm(&sub)?;
        clip(&mut y);
        Ok(y)
    }

    /// Frame-by-frame state; needs a causal config.
    pub fn session(&self) -> Result<VocoderSession<'_>> {
        if !self.config.causal {
            return Err(Error::Unsupported(
                "streaming generation needs a causal vocoder".into(),
            ));
        }
        Ok(VocoderSession {
            vocoder: self,
            caches: self.convs().map(Conv1d::new_cache).collect(),
            synth: self.pqmf.synthesizer(),
            frames: 0,
        })
    }
}

fn clip(y: &mut [f32]) {
    y.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
}

/// Streaming generator state: one cache per convolution plus the PQMF
/// synthesis history. Its size depends only on the config.
#[derive(Debug, Clone)]
pub struct VocoderSession<'v> {
    vocoder: &'v Vocoder,
    caches: Vec<ConvCache>,
    synth: PqmfSynthesizer<'v>,
    frames: usize,
}

impl VocoderSession<'_> {
    /// Generates audio for any number of new mel frames (`hop` samples each).
    pub fn push(&mut self, mel: &Tensor) -> Result<Vec<f32>> {
        if Vocoder::check_mel(mel)? == 0 {
            return Ok(Vec::new());
        }
        let sub = self
            .vocoder
            .subbands(mel, &mut Runner::Stream(self.caches.iter_mut()))?;
        let mut y = self.synth.push(&sub)?;
        clip(&mut y);
        self.frames += mel.rows();
        Ok(y)
    }

    pub fn push_frame(&mut self, frame: &[f32]) -> Result<Vec<f32>> {
        self.push(&Tensor::new(vec![1, frame.len()], frame.to_vec())?)
    }

    pub fn frames_generated(&self) -> usize {
        self.frames
    }

    /// Floats held across calls.
    pub fn state_len(&self) -> usize {
        self.caches.iter().map(|c| c.data().len()).sum::<usize>() + self.synth.state_len()
    }

    pub fn reset(&mut self) {
        self.caches.iter_mut().for_each(ConvCache::reset);
        self.synth.reset();
        self.frames = 0;
    }
}
