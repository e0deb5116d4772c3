//! Pseudo-QMF filter bank.
//!
//! The prototype is a Kaiser-windowed sinc lowpass of length `taps`. Band `k`
//! uses the cosine-modulated analysis filter
//! `h_k[n] = 2 h[n] cos((2k+1) pi/(2K) (n - (L-1)/2) + (-1)^k pi/4)` and the
//! time-reversed synthesis filter `g_k[n] = h_k[L-1-n]`. Both stages are
//! causal, so an analysis/synthesis round trip delays the signal by `L-1`
//! samples. Synthesis is scaled by `K` so the round-trip gain is one.
//!
//! With a single band the cosine modulation cannot pass the full spectrum, so
//! `K = 1` degenerates to a pair of pure delays splitting the same `L-1`
//! total.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Conv1d, ConvCache, ConvSpec};
use crate::tensor::Tensor;

pub const DEFAULT_BANDS: usize = 4;
pub const DEFAULT_TAPS: usize = 62;
pub const DEFAULT_CUTOFF_RATIO: f64 = 0.142;
pub const DEFAULT_KAISER_BETA: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PqmfParams {
    pub num_bands: usize,
    pub taps: usize,
    pub cutoff_ratio: f64,
    pub kaiser_beta: f64,
}

impl Default for PqmfParams {
    fn default() -> Self {
        Self {
            num_bands: DEFAULT_BANDS,
            taps: DEFAULT_TAPS,
            cutoff_ratio: DEFAULT_CUTOFF_RATIO,
            kaiser_beta: DEFAULT_KAISER_BETA,
        }
    }
}

impl PqmfParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_bands == 0 {
            return Err(Error::Design("need at least one band".into()));
        }
        if self.taps < self.num_bands {
            return Err(Error::Design(format!(
                "{} taps is fewer than {} bands",
                self.taps, self.num_bands
            )));
        }
        if !(self.cutoff_ratio > 0.0 && self.cutoff_ratio < 0.5) {
            return Err(Error::Design(format!(
                "cutoff ratio {} outside (0, 0.5)",
                self.cutoff_ratio
            )));
        }
        if !(self.kaiser_beta.is_finite() && self.kaiser_beta >= 0.0) {
            return Err(Error::Design(format!(
                "kaiser beta {} must be finite and non-negative",
                self.kaiser_beta
            )));
        }
        Ok(())
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

pub fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let mut w: Vec<f64> = (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / (len - 1) as f64 - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect();
    // Mirror so the window is exactly symmetric.
    for n in 0..len / 2 {
        w[len - 1 - n] = w[n];
    }
    w
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Windowed-sinc lowpass with cutoff `cutoff_ratio * pi` rad/sample.
pub fn kaiser_sinc_lowpass(taps: usize, cutoff_ratio: f64, beta: f64) -> Vec<f64> {
    let center = (taps as f64 - 1.0) / 2.0;
    let mut h: Vec<f64> = kaiser_window(taps, beta)
        .iter()
        .enumerate()
        .map(|(n, w)| cutoff_ratio * sinc(cutoff_ratio * (n as f64 - center)) * w)
        .collect();
    for n in 0..taps / 2 {
        h[taps - 1 - n] = h[n];
    }
    h
}

#[derive(Debug, Clone)]
pub struct PqmfBank {
    params: PqmfParams,
    prototype: Vec<f64>,
    analysis: Vec<Vec<f64>>,
    synthesis: Vec<Vec<f64>>,
    analysis_conv: Conv1d,
    synthesis_conv: Conv1d,
}

/// JSON form of a designed bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqmfArtifact {
    pub num_bands: usize,
    pub taps: usize,
    pub cutoff_ratio: f64,
    pub kaiser_beta: f64,
    pub prototype: Vec<f64>,
    pub analysis_filters: Vec<Vec<f64>>,
    pub synthesis_filters: Vec<Vec<f64>>,
}

pub fn design_bank(params: PqmfParams) -> Result<PqmfBank> {
    params.validate()?;
    let PqmfParams {
        num_bands: k_bands,
        taps,
        cutoff_ratio,
        kaiser_beta,
    } = params;
    let prototype = kaiser_sinc_lowpass(taps, cutoff_ratio, kaiser_beta);
    let analysis: Vec<Vec<f64>> = if k_bands == 1 {
        let mut delay = vec![0.0; taps];
        delay[(taps - 1) / 2] = 1.0;
        vec![delay]
    } else {
        let center = (taps as f64 - 1.0) / 2.0;
        (0..k_bands)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                prototype
                    .iter()
                    .enumerate()
                    .map(|(n, h)| {
                        2.0 * h
                            * ((2 * k + 1) as f64 * PI / (2 * k_bands) as f64 * (n as f64 - center)
                                + sign * PI / 4.0)
                                .cos()
                    })
                    .collect()
            })
            .collect()
    };
    let synthesis = analysis
        .iter()
        .map(|h| h.iter().rev().copied().collect())
        .collect();
    PqmfBank::from_filters(params, prototype, analysis, synthesis)
}

impl PqmfBank {
    fn from_filters(
        params: PqmfParams,
        prototype: Vec<f64>,
        analysis: Vec<Vec<f64>>,
        synthesis: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let (k, l) = (params.num_bands, params.taps);
        if prototype.len() != l
            || analysis.len() != k
            || synthesis.len() != k
            || analysis.iter().chain(&synthesis).any(|f| f.len() != l)
        {
            return Err(Error::Design(format!(
                "filter matrices must be {k}x{l} with a {l}-tap prototype"
            )));
        }
        // Causal strided conv computes sum_m W[m] x[tK + m - (L-1)], so the
        // analysis kernel is the reversed filter.
        let mut aw = vec![0.0f32; k * l];
        let mut sw = vec![0.0f32; k * l];
        for band in 0..k {
            for m in 0..l {
                aw[band * l + m] = analysis[band][l - 1 - m] as f32;
                sw[band * l + m] = (k as f64 * synthesis[band][l - 1 - m]) as f32;
            }
        }
        let analysis_conv = Conv1d::new(
            ConvSpec::causal(1, k, l, 1).with_stride(k),
            &Tensor::new(vec![k, 1, l], aw)?,
            &Tensor::zeros(&[k]),
        )?;
        let synthesis_conv = Conv1d::new(
            ConvSpec::causal(k, 1, l, 1),
            &Tensor::new(vec![1, k, l], sw)?,
            &Tensor::zeros(&[1]),
        )?;
        Ok(Self {
            params,
            prototype,
            analysis,
            synthesis,
            analysis_conv,
            synthesis_conv,
        })
    }

    pub fn params(&self) -> PqmfParams {
        self.params
    }

    pub fn num_bands(&self) -> usize {
        self.params.num_bands
    }

    pub fn taps(&self) -> usize {
        self.params.taps
    }

    /// Round-trip delay in samples.
    pub fn delay(&self) -> usize {
        self.params.taps - 1
    }

    pub fn prototype(&self) -> &[f64] {
        &self.prototype
    }

    pub fn analysis_filters(&self) -> &[Vec<f64>] {
        &self.analysis
    }

    pub fn synthesis_filters(&self) -> &[Vec<f64>] {
        &self.synthesis
    }

    /// Splits `x` into `[K, ceil(len/K)]` subbands.
    pub fn analysis(&self, x: &[f32]) -> Result<Tensor> {
        if x.len() < self.params.taps {
            return Err(Error::InsufficientInput {
                needed: self.params.taps,
                got: x.len(),
            });
        }
        let input = Tensor::new(vec![x.len(), 1], x.to_vec())?;
        self.analysis_conv.forward_tm(&input)?.transpose()
    }

    /// Merges `[K, T]` subbands into `K*T` samples.
    pub fn synthesis(&self, sub: &Tensor) -> Result<Vec<f32>> {
        let k = self.params.num_bands;
        if sub.shape().len() != 2 || sub.shape()[0] != k {
            return Err(Error::Shape(format!(
                "synthesis expects [{k}, T] subbands, got {:?}",
                sub.shape()
            )));
        }
        self.synthesis_tm(&sub.transpose()?)
    }

    /// Synthesis of time-major `[T, K]` subbands.
    pub fn synthesis_tm(&self, sub: &Tensor) -> Result<Vec<f32>> {
        let stuffed = self.zero_stuff(sub)?;
        Ok(self.synthesis_conv.forward_tm(&stuffed)?.into_data())
    }

    fn zero_stuff(&self, sub: &Tensor) -> Result<Tensor> {
        let k = self.params.num_bands;
        let t = sub.expect_2d("subband frames", k)?;
        let mut up = vec![0.0; t * k * k];
        for i in 0..t {
            up[i * k * k..i * k * k + k].copy_from_slice(sub.row(i));
        }
        Tensor::new(vec![t * k, k], up)
    }

    pub fn synthesizer(&self) -> PqmfSynthesizer<'_> {
        PqmfSynthesizer {
            bank: self,
            cache: self.synthesis_conv.new_cache(),
        }
    }

    pub fn to_artifact(&self) -> PqmfArtifact {
        PqmfArtifact {
            num_bands: self.params.num_bands,
            taps: self.params.taps,
            cutoff_ratio: self.params.cutoff_ratio,
            kaiser_beta: self.params.kaiser_beta,
            prototype: self.prototype.clone(),
            analysis_filters: self.analysis.clone(),
            synthesis_filters: self.synthesis.clone(),
        }
    }

    pub fn from_artifact(a: PqmfArtifact) -> Result<Self> {
        let params = PqmfParams {
            num_bands: a.num_bands,
            taps: a.taps,
            cutoff_ratio: a.cutoff_ratio,
            kaiser_beta: a.kaiser_beta,
        };
        params.validate()?;
        Self::from_filters(params, a.prototype, a.analysis_filters, a.synthesis_filters)
    }
}

/// Incremental synthesis; state is the left context of the synthesis filter.
#[derive(Debug, Clone)]
pub struct PqmfSynthesizer<'a> {
    bank: &'a PqmfBank,
    cache: ConvCache,
}

impl PqmfSynthesizer<'_> {
    /// Consumes `[t, K]` subband frames, returns `t*K` samples.
    pub fn push(&mut self, sub: &Tensor) -> Result<Vec<f32>> {
        let stuffed = self.bank.zero_stuff(sub)?;
        Ok(self
            .bank
            .synthesis_conv
            .step_tm(&stuffed, &mut self.cache)?
            .into_data())
    }

    pub fn reset(&mut self) {
        self.cache.reset();
    }

    pub fn state_len(&self) -> usize {
        self.cache.data().len()
    }
}
