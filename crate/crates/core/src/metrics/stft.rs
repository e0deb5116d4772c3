use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAG_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftResolution {
    pub fft_size: usize,
    pub hop: usize,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftResolutionSet(Vec<StftResolution>);

impl StftResolutionSet {
    pub fn new(resolutions: Vec<StftResolution>) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(Error::InvalidSpec("no STFT resolutions".into()));
        }
        for r in &resolutions {
            if r.hop == 0 || r.hop >= r.fft_size || r.window == 0 || r.window > r.fft_size {
                return Err(Error::InvalidSpec(format!("bad STFT resolution {r:?}")));
            }
        }
        Ok(Self(resolutions))
    }

    pub fn resolutions(&self) -> &[StftResolution] {
        &self.0
    }
}

impl Default for StftResolutionSet {
    fn default() -> Self {
        let r = |fft_size, hop, window| StftResolution {
            fft_size,
            hop,
            window,
        };
        Self(vec![r(1024, 120, 600), r(2048, 240, 1200), r(512, 50, 240)])
    }
}

/// Magnitude frames, zero padding the tail so every sample is covered.
fn magnitudes(x: &[f32], res: &StftResolution, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let fft = planner.plan_fft_forward(res.fft_size);
    let win: Vec<f64> = (0..res.window)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / res.window as f64).cos())
        .collect();
    let frames = 1 + x.len().saturating_sub(res.window).div_ceil(res.hop);
    let bins = res.fft_size / 2 + 1;
    let offset = (res.fft_size - res.window) / 2;
    let mut out = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex::new(0.0, 0.0); res.fft_size];
    for f in 0..frames {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, w) in win.iter().enumerate() {
            let v = x.get(f * res.hop + i).copied().unwrap_or(0.0) as f64;
            buf[offset + i].re = v * w;
        }
        fft.process(&mut buf);
        out.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    out
}

/// Sum over resolutions of spectral convergence and mean log-magnitude L1.
/// Spectral convergence is the mean of `|Y-X|/|X|` and `|Y-X|/|Y|`, which
/// keeps the distance symmetric.
pub fn mrstft_distance(x: &[f32], y: &[f32], resolutions: &StftResolutionSet) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Alignment(format!(
            "signals of {} and {} samples",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut planner = FftPlanner::new();
    let mut total = 0.0;
    for res in resolutions.resolutions() {
        let mx = magnitudes(x, res, &mut planner);
        let my = magnitudes(y, res, &mut planner);
        let diff = mx
            .iter()
            .zip(&my)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let nx = mx.iter().map(|a| a * a).sum::<f64>().sqrt();
        let ny = my.iter().map(|a| a * a).sum::<f64>().sqrt();
        let sc = if diff == 0.0 {
            0.0
        } else {
            0.5 * (diff / nx.max(MAG_FLOOR) + diff / ny.max(MAG_FLOOR))
        };
        let log_l1 = mx
            .iter()
            .zip(&my)
            .map(|(a, b)| (a.max(MAG_FLOOR).ln() - b.max(MAG_FLOOR).ln()).abs())
            .sum::<f64>()
            / mx.len() as f64;
        total += sc + log_l1;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_on_identity_and_symmetric() {
        let set = StftResolutionSet::default();
        let x = noise(4000, 1);
        let y = noise(4000, 2);
        assert_eq!(mrstft_distance(&x, &x, &set).unwrap(), 0.0);
        let a = mrstft_distance(&x, &y, &set).unwrap();
        let b = mrstft_distance(&y, &x, &set).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn monotone_in_attenuation() {
        let set = StftResolutionSet::default();
        let x = noise(8000, 3);
        let mut last = 0.0;
        for db in [1.0, 3.0, 6.0, 12.0] {
            let g = 10f32.powf(-db / 20.0);
            let y: Vec<f32> = x.iter().map(|v| v * g).collect();
            let d = mrstft_distance(&x, &y, &set).unwrap();
            assert!(d > last, "{db} dB: {d} <= {last}");
            last = d;
        }
    }

    #[test]
    fn validation() {
        assert!(StftResolutionSet::new(vec![]).is_err());
        let bad = StftResolution {
            fft_size: 256,
            hop: 256,
            window: 128,
        };
        assert!(StftResolutionSet::new(vec![bad]).is_err());
        let set = StftResolutionSet::default();
        assert!(matches!(
            mrstft_distance(&[0.0; 3], &[0.0; 4], &set),
            Err(Error::Alignment(_))
        ));
    }
}
