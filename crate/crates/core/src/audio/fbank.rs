//! Causal log-mel filterbank: frame `t` ends at sample `(t + 1) * 160` and
//! spans the 400 samples before it (zeros before the stream starts), so
//! each frame is final as soon as its hop arrives.

use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::model_io::{HOP_SAMPLES, N_MELS, SAMPLE_RATE};
use crate::tensor::Tensor;

pub const FBANK_WINDOW: usize = 400;
pub const FFT_SIZE: usize = 512;
const MIN_HZ: f64 = 20.0;
const MAX_HZ: f64 = 8000.0;
const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters as (first bin, weights).
fn mel_filters() -> Vec<(usize, Vec<f64>)> {
    let bins = FFT_SIZE / 2 + 1;
    let (lo, hi) = (hz_to_mel(MIN_HZ), hz_to_mel(MAX_HZ));
    let edges: Vec<f64> = (0..N_MELS + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (N_MELS + 1) as f64))
        .collect();
    let bin_hz = SAMPLE_RATE as f64 / FFT_SIZE as f64;
    (0..N_MELS)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            let weights: Vec<(usize, f64)> = (0..bins)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < r {
                        (r - f) / (r - c)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect();
            let first = weights.first().map_or(0, |p| p.0);
            (first, weights.into_iter().map(|p| p.1).collect())
        })
        .collect()
}

/// Incremental extractor; offline extraction is the same object fed once.
#[derive(Clone)]
pub struct FbankExtractor {
    window: Vec<f64>,
    filters: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
    buffer: Vec<f32>,
    frames: usize,
}

impl std::fmt::Debug for FbankExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbankExtractor")
            .field("buffered", &self.buffer.len())
            .field("frames", &self.frames)
            .finish()
    }
}

impl Default for FbankExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl FbankExtractor {
    pub fn new() -> Self {
        let window = (0..FBANK_WINDOW)
            .map(|i| {
                0.5 - 0.5
                    * (2.0 * std::f64::consts::PI * i as f64 / (FBANK_WINDOW - 1) as f64).cos()
            })
            .collect();
        Self {
            window,
            filters: mel_filters(),
            fft: FftPlanner::new().plan_fft_forward(FFT_SIZE),
            buffer: vec![0.0; FBANK_WINDOW - HOP_SAMPLES],
            frames: 0,
        }
    }

    pub fn frames_emitted(&self) -> usize {
        self.frames
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
        self.buffer.resize(FBANK_WINDOW - HOP_SAMPLES, 0.0);
        self.frames = 0;
    }

    fn frame(&self, x: &[f32], out: &mut Vec<f32>) {
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
        for ((b, &v), w) in buf.iter_mut().zip(x).zip(&self.window) {
            b.re = v as f64 * w;
        }
        self.fft.process(&mut buf);
        let power: Vec<f64> = buf[..FFT_SIZE / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        for (first, w) in &self.filters {
            let e: f64 = w.iter().zip(&power[*first..]).map(|(a, p)| a * p).sum();
            out.push(e.max(LOG_FLOOR).ln() as f32);
        }
    }

    /// Appends samples; returns every frame whose hop is now complete.
    pub fn push(&mut self, samples: &[f32]) -> Tensor {
        self.buffer.extend_from_slice(samples);
        let mut out = Vec::new();
        let mut start = 0;
        while self.buffer.len() - start >= FBANK_WINDOW {
            self.frame(&self.buffer[start..start + FBANK_WINDOW], &mut out);
            start += HOP_SAMPLES;
        }
        self.buffer.drain(..start);
        let n = out.len() / N_MELS;
        self.frames += n;
        Tensor::new(vec![n, N_MELS], out).expect("rows of N_MELS")
    }

    /// Zero-pads a trailing partial hop into one last frame.
    pub fn finish(&mut self) -> Tensor {
        let partial = self.buffer.len() - (FBANK_WINDOW - HOP_SAMPLES);
        if partial == 0 {
            return Tensor::zeros(&[0, N_MELS]);
        }
        let pad = vec![0.0; HOP_SAMPLES - partial];
        self.push(&pad)
    }
}

/// Offline extraction: `ceil(len / 160)` frames.
pub fn fbank(samples: &[f32]) -> Tensor {
    let mut ex = FbankExtractor::new();
    let head = ex.push(samples);
    let tail = ex.finish();
    Tensor::concat_rows(&[head, tail]).expect("same width")
}
