use crate::error::{Error, Result};

const OCTAVE_TOLERANCE: f64 = 0.9;

/// RMSE (Hz) and Pearson correlation over frames voiced in both tracks.
/// A frame is voiced when its F0 is positive.
pub fn f0_metrics(reference: &[f64], hypothesis: &[f64]) -> Result<(f64, f64)> {
    if reference.len() != hypothesis.len() {
        return Err(Error::Alignment(format!(
            "{} reference frames vs {} hypothesis frames",
            reference.len(),
            hypothesis.len()
        )));
    }
    let pairs: Vec<(f64, f64)> = reference
        .iter()
        .zip(hypothesis)
        .filter(|(r, h)| **r > 0.0 && **h > 0.0)
        .map(|(r, h)| (*r, *h))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::UndefinedCorrelation(pairs.len()));
    }
    let n = pairs.len() as f64;
    let rmse = (pairs.iter().map(|(r, h)| (h - r).powi(2)).sum::<f64>() / n).sqrt();
    let mr = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mh = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (r, h) in &pairs {
        let (a, b) = (r - mr, h - mh);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(pairs.len()));
    }
    let corr = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok((rmse, corr))
}

/// Settings of the autocorrelation F0 tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Params {
    pub sample_rate: u32,
    pub hop: usize,
    pub window: usize,
    pub min_hz: f64,
    pub max_hz: f64,
    /// Normalised autocorrelation peak needed to call a frame voiced.
    pub voicing_threshold: f64,
}

impl Default for F0Params {
    fn default() -> Self {
        Self {
            sample_rate: crate::model_io::SAMPLE_RATE,
            hop: crate::model_io::HOP_SAMPLES,
            window: 640,
            min_hz: 60.0,
            max_hz: 500.0,
            voicing_threshold: 0.45,
        }
    }
}

/// One F0 value per hop (0 for unvoiced), from the normalised
/// autocorrelation peak with parabolic refinement.
pub fn track_f0(signal: &[f32], params: &F0Params) -> Result<Vec<f64>> {
    let sr = params.sample_rate as f64;
    if params.hop == 0 || params.min_hz <= 0.0 || params.max_hz <= params.min_hz {
        return Err(Error::InvalidSpec(format!(
            "bad F0 tracker settings {params:?}"
        )));
    }
    let min_lag = (sr / params.max_hz).floor().max(2.0) as usize;
    let max_lag = (sr / params.min_hz).ceil() as usize;
    if params.window <= max_lag {
        return Err(Error::InvalidSpec(format!(
            "window {} must exceed the longest lag {max_lag}",
            params.window
        )));
    }
    let frames = signal.len().div_ceil(params.hop);
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let centre = f * params.hop + params.hop / 2;
        let start = centre.saturating_sub(params.window / 2);
        let end = (start + params.window).min(signal.len());
        let x: Vec<f64> = signal[start..end].iter().map(|&v| v as f64).collect();
        let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
        let x: Vec<f64> = x.iter().map(|v| v - mean).collect();
        if x.len() <= max_lag + 1 {
            out.push(0.0);
            continue;
        }
        let r = |lag: usize| -> f64 {
            let a = &x[..x.len() - lag];
            let b = &x[lag..];
            let num: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            let den = (a.iter().map(|v| v * v).sum::<f64>() * b.iter().map(|v| v * v).sum::<f64>())
                .sqrt();
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        };
        let corr: Vec<f64> = (min_lag - 1..=max_lag + 1).map(r).collect();
        let peak = corr[1..corr.len() - 1]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if peak < params.voicing_threshold {
            out.push(0.0);
            continue;
        }
        // shortest lag near the top peak, so multiples of the period lose
        let best = (1..corr.len() - 1)
            .find(|&i| {
                corr[i] >= OCTAVE_TOLERANCE * peak
                    && corr[i] >= corr[i - 1]
                    && corr[i] >= corr[i + 1]
            })
            .expect("the peak itself qualifies")
            - 1;
        let (l, c, rr) = (corr[best], corr[best + 1], corr[best + 2]);
        let denom = l - 2.0 * c + rr;
        let shift = if denom.abs() > 1e-12 {
            (0.5 * (l - rr) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let lag = (best + min_lag) as f64 + shift;
        out.push(sr / lag);
    }
    Ok(out)
}
