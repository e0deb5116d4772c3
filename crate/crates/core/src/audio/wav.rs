use std::path::Path;

use hound::{SampleFormat, WavSpec};

use crate::error::{Error, Result};
use crate::model_io::SAMPLE_RATE;
use crate::pqmf::kaiser_sinc_lowpass;

/// Reads any PCM or float WAV as mono (channel average) at its own rate.
pub fn read_wav_native(path: impl AsRef<Path>) -> Result<(u32, Vec<f32>)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let ch = spec.channels as usize;
    if ch == 0 {
        return Err(Error::Unsupported("WAV with zero channels".into()));
    }
    let mono = interleaved
        .chunks_exact(ch)
        .map(|f| f.iter().sum::<f32>() / ch as f32)
        .collect();
    Ok((spec.sample_rate, mono))
}

/// Reads a WAV as mono 16 kHz.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let (rate, samples) = read_wav_native(path)?;
    resample(&samples, rate, SAMPLE_RATE)
}

/// Integer-ratio downsampling through a Kaiser-windowed sinc lowpass.
pub fn resample(x: &[f32], from: u32, to: u32) -> Result<Vec<f32>> {
    if from == to {
        return Ok(x.to_vec());
    }
    if to == 0 || from < to || !from.is_multiple_of(to) {
        return Err(Error::Unsupported(format!(
            "resampling {from} Hz to {to} Hz (integer downsampling only)"
        )));
    }
    let m = (from / to) as usize;
    let taps = 32 * m + 1;
    let h = kaiser_sinc_lowpass(taps, 0.9 / m as f64, 8.6);
    let c = (taps - 1) / 2;
    let n_out = x.len().div_ceil(m);
    Ok((0..n_out)
        .map(|i| {
            let centre = (i * m) as isize;
            h.iter()
                .enumerate()
                .filter_map(|(j, hj)| {
                    let k = centre + j as isize - c as isize;
                    usize::try_from(k)
                        .ok()
                        .and_then(|k| x.get(k))
                        .map(|v| *v as f64 * hj)
                })
                .sum::<f64>() as f32
        })
        .collect())
}

/// Writes 16-bit PCM mono, clipping to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, samples: &[f32], sample_rate: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
        w.write_sample(v)?;
    }
    w.finalize()?;
    Ok(())
}
