//! Objective evaluation and benchmark arithmetic.

mod f0;
mod latency;
mod stft;

pub use f0::{f0_metrics, track_f0, F0Params};
pub use latency::{
    latency_report, rtf, BenchRecord, LatencyReport, VocoderSpeedRecord, LOOKAHEAD_MS,
};
pub use stft::{mrstft_distance, StftResolution, StftResolutionSet};

use std::f64::consts::{LN_10, PI};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weight of the time-domain term in the vocoder loss.
pub const LAMBDA_TIME: f64 = 10.0;
/// Weight of the multi-resolution STFT term in the vocoder loss.
pub const LAMBDA_STFT: f64 = 2.0;
/// Weight between the CTC and attention terms of the ASR training loss.
/// Training only; kept for reference.
pub const ASR_LOSS_WEIGHT: f64 = 0.7;
/// Cepstral coefficients compared by MCD (c0 excluded).
pub const DEFAULT_MCD_COEFFS: usize = 13;

/// Mel cepstral distortion in dB, averaged over frames. Each frame holds
/// `c0..cM`; coefficients `1..=num_coeffs` are compared.
pub fn mcd(reference: &[Vec<f64>], hypothesis: &[Vec<f64>], num_coeffs: usize) -> Result<f64> {
    if reference.len() != hypothesis.len() {
        return Err(Error::Alignment(format!(
            "{} reference frames vs {} hypothesis frames",
            reference.len(),
            hypothesis.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scale = 10.0 / LN_10 * 2f64.sqrt();
    let mut total = 0.0;
    for (r, h) in reference.iter().zip(hypothesis) {
        if r.len() <= num_coeffs || h.len() <= num_coeffs {
            return Err(Error::Alignment(format!(
                "frames need {} coefficients, got {} / {}",
                num_coeffs + 1,
                r.len(),
                h.len()
            )));
        }
        let sq: f64 = (1..=num_coeffs).map(|i| (r[i] - h[i]).powi(2)).sum();
        total += scale * sq.sqrt();
    }
    Ok(total / reference.len() as f64)
}

/// Cepstra of log-mel frames via an orthonormal DCT-II, `num_coeffs + 1`
/// values per frame (c0 first).
pub fn mel_cepstra(log_mel: &Tensor, num_coeffs: usize) -> Result<Vec<Vec<f64>>> {
    if log_mel.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "log-mel must be [T, bins], got {:?}",
            log_mel.shape()
        )));
    }
    let bins = log_mel.cols();
    if num_coeffs >= bins {
        return Err(Error::InvalidSpec(format!(
            "{num_coeffs} coefficients from {bins} bins"
        )));
    }
    let n = bins as f64;
    Ok((0..log_mel.rows())
        .map(|t| {
            let row = log_mel.row(t);
            (0..=num_coeffs)
                .map(|k| {
                    let norm = if k == 0 {
                        (1.0 / n).sqrt()
                    } else {
                        (2.0 / n).sqrt()
                    };
                    norm * row
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| v as f64 * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                        .sum::<f64>()
                })
                .collect()
        })
        .collect())
}

/// `l_g + 10 l_time + 2 l_stft`.
pub fn combine_vocoder_loss(l_g: f64, l_time: f64, l_stft: f64) -> Result<f64> {
    for (name, v) in [("l_g", l_g), ("l_time", l_time), ("l_stft", l_stft)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} = {v}")));
        }
    }
    Ok(l_g + LAMBDA_TIME * l_time + LAMBDA_STFT * l_stft)
}
