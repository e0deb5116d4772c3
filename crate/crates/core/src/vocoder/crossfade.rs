//! Hann-weighted overlap joining for chunked (non-streaming) generation.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Vocoder;

/// Symmetric Hann window indexed by `n` in `[-(N-1)/2, (N-1)/2]`, with
/// `w[0] = 1` and zeros at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct HannWindow {
    weights: Vec<f64>,
}

pub fn hann_window(len: usize) -> Result<HannWindow> {
    if len < 3 || len.is_multiple_of(2) {
        return Err(Error::InvalidLength(len));
    }
    let half = (len - 1) / 2;
    let denom = (len - 1) as f64;
    let weights = (0..len)
        .map(|i| {
            let n = i as f64 - half as f64;
            0.5 * (1.0 + (2.0 * PI * n / denom).cos())
        })
        .collect::<Vec<_>>();
    let mut w = HannWindow { weights };
    // pin the exact values that rounding in cos() would otherwise miss
    w.weights[half] = 1.0;
    w.weights[0] = 0.0;
    w.weights[len - 1] = 0.0;
    for i in 0..half {
        w.weights[len - 1 - i] = w.weights[i];
    }
    Ok(w)
}

impl HannWindow {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn half_width(&self) -> usize {
        (self.weights.len() - 1) / 2
    }

    /// Weight at signed offset `n` from the centre.
    pub fn get(&self, n: isize) -> Option<f64> {
        let i = n + self.half_width() as isize;
        usize::try_from(i)
            .ok()
            .and_then(|i| self.weights.get(i).copied())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Overlap of `(N+1)/2` samples: the descending half of the window
/// (centre included) fades the earlier chunk out, its complement fades the
/// later chunk in.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossfadeSpec {
    window_length: usize,
    fade_out: Vec<f32>,
}

impl CrossfadeSpec {
    pub fn new(window_length: usize) -> Result<Self> {
        let w = hann_window(window_length)?;
        let fade_out = (0..=w.half_width() as isize)
            .map(|n| w.get(n).expect("within window") as f32)
            .collect();
        Ok(Self {
            window_length,
            fade_out,
        })
    }

    /// No overlap: joining is plain concatenation.
    pub fn disabled() -> Self {
        Self {
            window_length: 0,
            fade_out: Vec::new(),
        }
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn overlap(&self) -> usize {
        self.fade_out.len()
    }

    pub fn fade_out(&self) -> &[f32] {
        &self.fade_out
    }

    pub fn fade_in(&self) -> Vec<f32> {
        self.fade_out.iter().map(|a| 1.0 - a).collect()
    }

    /// Blends `next`'s head into the last `overlap` samples of `out`, then
    /// appends the rest of `next`.
    fn blend_into(&self, out: &mut Vec<f32>, next: &[f32]) -> Result<()> {
        let o = self.overlap();
        if out.len() < o || next.len() < o {
            return Err(Error::InvalidSpec(format!(
                "overlap of {o} samples exceeds a chunk ({} / {})",
                out.len(),
                next.len()
            )));
        }
        let start = out.len() - o;
        for ((y, &b), &a) in out[start..].iter_mut().zip(next).zip(&self.fade_out) {
            // b + a (y - b): equal inputs pass through unchanged
            *y = b + a * (*y - b);
        }
        out.extend_from_slice(&next[o..]);
        Ok(())
    }
}

/// Joins two chunks whose last / first `overlap` samples cover the same
/// time span. Output length is `len(a) + len(b) - overlap`.
pub fn crossfade_join(a: &[f32], b: &[f32], spec: &CrossfadeSpec) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    spec.blend_into(&mut out, b)?;
    Ok(out)
}

/// Chunk-by-chunk offline generation with overlap joining.
///
/// Every chunk after the first is generated with `ceil(overlap / hop)`
/// extra leading mel frames so its head covers the previous chunk's tail.
/// The last `overlap` samples are held back until the next chunk (or
/// [`finish`](Self::finish)) settles them.
#[derive(Debug, Clone)]
pub struct OverlapVocoder<'v> {
    vocoder: &'v Vocoder,
    spec: CrossfadeSpec,
    lead_frames: usize,
    context: Vec<f32>,
    held: Vec<f32>,
    chunks: usize,
}

impl<'v> OverlapVocoder<'v> {
    pub fn new(vocoder: &'v Vocoder, spec: CrossfadeSpec) -> Self {
        let hop = vocoder.hop();
        let lead_frames = spec.overlap().div_ceil(hop);
        Self {
            vocoder,
            spec,
            lead_frames,
            context: Vec::new(),
            held: Vec::new(),
            chunks: 0,
        }
    }

    pub fn spec(&self) -> &CrossfadeSpec {
        &self.spec
    }

    /// Generates one mel chunk and returns the samples that are final.
    pub fn push(&mut self, mel: &Tensor) -> Result<Vec<f32>> {
        let t = mel.expect_2d("mel chunk", crate::model_io::N_MELS)?;
        if t == 0 {
            return Ok(Vec::new());
        }
        let hop = self.vocoder.hop();
        let o = self.spec.overlap();
        if t * hop <= o {
            return Err(Error::InvalidSpec(format!(
                "overlap of {o} samples needs chunks longer than {t} frames"
            )));
        }
        let lead = if self.chunks == 0 {
            0
        } else {
            self.context.len() / mel.cols()
        };
        let mut input = self.context.clone();
        input.extend_from_slice(mel.data());
        let wav = self
            .vocoder
            .generate_offline(&Tensor::new(vec![lead + t, mel.cols()], input)?)?;
        let mut out = std::mem::take(&mut self.held);
        if self.chunks == 0 {
            out.extend_from_slice(&wav);
        } else {
            self.spec.blend_into(&mut out, &wav[lead * hop - o..])?;
        }
        self.held = out.split_off(out.len() - o);
        let keep = self.lead_frames.min(t);
        self.context = mel.data()[(t - keep) * mel.cols()..].to_vec();
        self.chunks += 1;
        Ok(out)
    }

    pub fn finish(&mut self) -> Vec<f32> {
        self.context.clear();
        self.chunks = 0;
        std::mem::take(&mut self.held)
    }
}

/// Splits `mel` into `chunk_frames` chunks and joins them with `spec`.
pub fn generate_chunked(
    vocoder: &Vocoder,
    mel: &Tensor,
    chunk_frames: usize,
    spec: &CrossfadeSpec,
) -> Result<Vec<f32>> {
    if chunk_frames == 0 {
        return Err(Error::InvalidChunk("chunk of 0 frames".into()));
    }
    let t = mel.expect_2d("mel input", crate::model_io::N_MELS)?;
    if t == 0 {
        return Err(Error::EmptyInput);
    }
    let mut ov = OverlapVocoder::new(vocoder, spec.clone());
    let mut out = Vec::with_capacity(t * vocoder.hop());
    for start in (0..t).step_by(chunk_frames) {
        let end = (start + chunk_frames).min(t);
        out.extend(ov.push(&mel.slice_rows(start, end))?);
    }
    out.extend(ov.finish());
    Ok(out)
}

/// Mean absolute first difference at chunk joints versus everywhere else.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointStats {
    pub joint: f64,
    pub interior: f64,
}

impl JointStats {
    pub fn ratio(&self) -> f64 {
        self.joint / self.interior
    }
}

/// `joints` are sample indices `b` where a chunk starts; the jump measured
/// there is `|y[b] - y[b-1]|`.
pub fn joint_discontinuity(y: &[f32], joints: &[usize]) -> Result<JointStats> {
    if y.len() < 2 {
        return Err(Error::InsufficientInput {
            needed: 2,
            got: y.len(),
        });
    }
    let mut is_joint = vec![false; y.len()];
    for &b in joints {
        if b == 0 || b >= y.len() {
            return Err(Error::InvalidSpec(format!(
                "joint at {b} outside 1..{}",
                y.len()
            )));
        }
        is_joint[b] = true;
    }
    let (mut js, mut jn, mut is, mut inn) = (0.0, 0usize, 0.0, 0usize);
    for i in 1..y.len() {
        let d = (y[i] as f64 - y[i - 1] as f64).abs();
        if is_joint[i] {
            js += d;
            jn += 1;
        } else {
            is += d;
            inn += 1;
        }
    }
    if jn == 0 || inn == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(JointStats {
        joint: js / jn as f64,
        interior: is / inn as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_values() {
        let w = hann_window(5).unwrap();
        assert_eq!(w.get(0), Some(1.0));
        assert_eq!(w.get(2), Some(0.0));
        assert_eq!(w.get(-2), Some(0.0));
        assert!((w.get(1).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(w.get(3), None);
        for n in [1, 2, 4] {
            assert!(matches!(hann_window(n), Err(Error::InvalidLength(_))));
        }
    }

    #[test]
    fn weights_are_complementary() {
        let spec = CrossfadeSpec::new(161).unwrap();
        assert_eq!(spec.overlap(), 81);
        for (a, b) in spec.fade_out().iter().zip(spec.fade_in()) {
            assert_eq!(a + b, 1.0);
        }
    }

    #[test]
    fn ones_into_zeros_gives_fade_out() {
        let spec = CrossfadeSpec::new(5).unwrap();
        let a = [7.0, 1.0, 1.0, 1.0];
        let b = [0.0, 0.0, 0.0, 9.0];
        let y = crossfade_join(&a, &b, &spec).unwrap();
        assert_eq!(y, vec![7.0, 1.0, 0.5, 0.0, 9.0]);
    }

    #[test]
    fn identical_overlap_is_lossless() {
        let spec = CrossfadeSpec::new(9).unwrap();
        let a: Vec<f32> = (0..20).map(|i| (i as f32 * 0.37).sin()).collect();
        let y = crossfade_join(&a[..12], &a[7..], &spec).unwrap();
        assert_eq!(y, a);
    }

    #[test]
    fn disabled_concatenates() {
        let y = crossfade_join(&[1.0, 2.0], &[3.0], &CrossfadeSpec::disabled()).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
        let spec = CrossfadeSpec::new(9).unwrap();
        assert!(matches!(
            crossfade_join(&[1.0; 3], &[1.0; 9], &spec),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn joint_stats() {
        let y = [0.0, 0.0, 1.0, 1.0, 1.0];
        let s = joint_discontinuity(&y, &[2]).unwrap();
        assert_eq!(s.joint, 1.0);
        assert_eq!(s.interior, 0.0);
    }
}
