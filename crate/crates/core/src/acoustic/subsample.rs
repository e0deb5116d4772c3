//! Convolutional front end: two valid stride-2, kernel-3 convolutions with
//! ReLU, then a linear projection. One output needs 7 input frames; each
//! further output needs 4 more.

use crate::error::Result;
use crate::model_io::{Model, N_MELS};
use crate::nn::{relu_inplace, Conv1d, ConvSpec, Linear};
use crate::tensor::Tensor;

/// Input frames needed before the first output.
pub const RECEPTIVE_FIELD: usize = 7;
/// Input frames per output after the first.
pub const STRIDE: usize = 4;

#[derive(Debug, Clone)]
pub struct Subsampler {
    conv1: Conv1d,
    conv2: Conv1d,
    out: Linear,
}

/// Streaming buffers between calls.
#[derive(Debug, Clone, Default)]
pub struct SubsampleState {
    raw: Vec<f32>,
    mid: Vec<f32>,
    consumed: usize,
    emitted: usize,
}

impl SubsampleState {
    /// Input frames received but not yet accounted for by an output.
    pub fn pending_frames(&self) -> usize {
        self.consumed - STRIDE * self.emitted
    }

    pub fn frames_consumed(&self) -> usize {
        self.consumed
    }

    pub fn outputs_emitted(&self) -> usize {
        self.emitted
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Number of outputs produced by `frames` input frames.
pub fn outputs_for(frames: usize) -> usize {
    if frames < RECEPTIVE_FIELD {
        0
    } else {
        (frames - RECEPTIVE_FIELD) / STRIDE + 1
    }
}

impl Subsampler {
    pub fn from_model(model: &Model) -> Result<Self> {
        let d = model.config().encoder.d_model;
        let t = |n: &str| model.tensor(n);
        Ok(Self {
            conv1: Conv1d::new(
                ConvSpec::valid(N_MELS, d, 3, 2),
                t("encoder.subsample.conv1.weight")?,
                t("encoder.subsample.conv1.bias")?,
            )?,
            conv2: Conv1d::new(
                ConvSpec::valid(d, d, 3, 2),
                t("encoder.subsample.conv2.weight")?,
                t("encoder.subsample.conv2.bias")?,
            )?,
            out: Linear::new(
                t("encoder.subsample.out.weight")?,
                t("encoder.subsample.out.bias")?,
            )?,
        })
    }

    pub fn width(&self) -> usize {
        self.out.out_dim()
    }

    /// Whole-sequence subsampling of `[T, 80]` fbank frames.
    pub fn offline(&self, fbank: &Tensor) -> Result<Tensor> {
        let t = fbank.expect_2d("fbank", N_MELS)?;
        if t < RECEPTIVE_FIELD {
            return Ok(Tensor::zeros(&[0, self.width()]));
        }
        let mut h = self.conv1.forward_tm(fbank)?;
        relu_inplace(h.data_mut());
        let mut h = self.conv2.forward_tm(&h)?;
        relu_inplace(h.data_mut());
        self.out.forward(&h)
    }

    /// Feeds any number of fbank frames and returns the outputs that became
    /// computable.
    pub fn push(&self, state: &mut SubsampleState, frames: &Tensor) -> Result<Tensor> {
        let n = frames.expect_2d("fbank", N_MELS)?;
        state.raw.extend_from_slice(frames.data());
        state.consumed += n;
        let mut h = self.conv1.valid_stream(&mut state.raw)?;
        relu_inplace(h.data_mut());
        state.mid.extend_from_slice(h.data());
        let mut h = self.conv2.valid_stream(&mut state.mid)?;
        relu_inplace(h.data_mut());
        state.emitted += h.rows();
        self.out.forward(&h)
    }
}
