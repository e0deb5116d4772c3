//! 1-D convolution over time.
//!
//! Activations are kept time-major (`[T, C]`) inside the models; the
//! channel-major (`[C, T]`) entry points [`conv1d`] and
//! [`conv1d_streaming_step`] transpose around the same kernel. Offline causal
//! convolution is literally "prepend zeros, then valid convolution", and the
//! streaming step is "prepend cache, then valid convolution", so both paths
//! run identical arithmetic per output frame.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// `(k-1)*dilation` zeros on the left, none on the right.
    Causal,
    /// Symmetric zero padding keeping the length (stride 1, odd extent).
    Same,
    /// No padding.
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub fn causal(cin: usize, cout: usize, kernel_size: usize, dilation: usize) -> Self {
        Self {
            in_channels: cin,
            out_channels: cout,
            kernel_size,
            dilation,
            stride: 1,
            padding: Padding::Causal,
        }
    }

    pub fn valid(cin: usize, cout: usize, kernel_size: usize, stride: usize) -> Self {
        Self {
            in_channels: cin,
            out_channels: cout,
            kernel_size,
            dilation: 1,
            stride,
            padding: Padding::Valid,
        }
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn is_causal(&self) -> bool {
        self.padding == Padding::Causal
    }

    /// Number of input frames one output frame sees.
    pub fn extent(&self) -> usize {
        (self.kernel_size - 1) * self.dilation + 1
    }

    /// Left context a causal stream has to remember.
    pub fn context(&self) -> usize {
        (self.kernel_size - 1) * self.dilation
    }

    fn pads(&self) -> (usize, usize) {
        let ctx = self.context();
        match self.padding {
            Padding::Causal => (ctx, 0),
            Padding::Same => (ctx / 2, ctx - ctx / 2),
            Padding::Valid => (0, 0),
        }
    }

    pub fn output_len(&self, t: usize) -> Result<usize> {
        let (l, r) = self.pads();
        let padded = t + l + r;
        if padded < self.extent() {
            return Err(Error::InsufficientInput {
                needed: self.extent().saturating_sub(l + r),
                got: t,
            });
        }
        Ok((padded - self.extent()) / self.stride + 1)
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.out_channels == 0
            || self.kernel_size == 0
            || self.dilation == 0
            || self.stride == 0
        {
            return Err(Error::Shape(format!("degenerate conv spec {self:?}")));
        }
        if self.padding == Padding::Same && self.stride != 1 {
            return Err(Error::Unsupported("same padding with stride > 1".into()));
        }
        Ok(())
    }
}

/// Left-context buffer for one causal convolution, time-major
/// `[(k-1)*dilation, channels]`, zero-initialised.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvCache {
    channels: usize,
    buffer: Vec<f32>,
}

impl ConvCache {
    pub fn new(spec: &ConvSpec) -> Self {
        Self {
            channels: spec.in_channels,
            buffer: vec![0.0; spec.context() * spec.in_channels],
        }
    }

    /// Frames of left context held; fixed by the layer shape.
    pub fn frames(&self) -> usize {
        self.buffer.len() / self.channels
    }

    pub fn reset(&mut self) {
        self.buffer.fill(0.0);
    }

    pub fn data(&self) -> &[f32] {
        &self.buffer
    }
}

/// A convolution layer with weights rearranged to `[k][cin][cout]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    spec: ConvSpec,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl Conv1d {
    /// `weight` is `[cout, cin, k]`, `bias` is `[cout]`.
    pub fn new(spec: ConvSpec, weight: &Tensor, bias: &Tensor) -> Result<Self> {
        spec.validate()?;
        let (cout, cin, k) = (spec.out_channels, spec.in_channels, spec.kernel_size);
        if weight.shape() != [cout, cin, k] {
            return Err(Error::Shape(format!(
                "conv weight {:?}, expected [{cout}, {cin}, {k}]",
                weight.shape()
            )));
        }
        if bias.shape() != [cout] {
            return Err(Error::Shape(format!(
                "conv bias {:?}, expected [{cout}]",
                bias.shape()
            )));
        }
        let w = weight.data();
        let mut rearranged = vec![0.0; w.len()];
        for o in 0..cout {
            for i in 0..cin {
                for m in 0..k {
                    rearranged[(m * cin + i) * cout + o] = w[(o * cin + i) * k + m];
                }
            }
        }
        Ok(Self {
            spec,
            weight: rearranged,
            bias: bias.data().to_vec(),
        })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn new_cache(&self) -> ConvCache {
        ConvCache::new(&self.spec)
    }

    /// Valid convolution over `frames` time-major input frames, appending
    /// output frames to `out`.
    fn run_valid(&self, x: &[f32], frames: usize, out: &mut Vec<f32>) {
        let ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel_size: k,
            dilation,
            stride,
            ..
        } = self.spec;
        let extent = self.spec.extent();
        if frames < extent {
            return;
        }
        let n_out = (frames - extent) / stride + 1;
        let start = out.len();
        out.reserve(n_out * cout);
        for t in 0..n_out {
            out.extend_from_slice(&self.bias);
            let acc = &mut out[start + t * cout..start + (t + 1) * cout];
            for m in 0..k {
                let pos = t * stride + m * dilation;
                let xr = &x[pos * cin..(pos + 1) * cin];
                let wm = &self.weight[m * cin * cout..(m + 1) * cin * cout];
                for (i, &xv) in xr.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let w = &wm[i * cout..(i + 1) * cout];
                    for (a, wv) in acc.iter_mut().zip(w) {
                        *a += xv * wv;
                    }
                }
            }
        }
    }

    /// Runs a valid (unpadded) convolution over every complete window in
    /// `buf` (time-major frames), then drops the consumed frames so the next
    /// call continues at the same stride phase.
    pub fn valid_stream(&self, buf: &mut Vec<f32>) -> Result<Tensor> {
        let cin = self.spec.in_channels;
        let frames = buf.len() / cin;
        let mut out = Vec::new();
        self.run_valid(buf, frames, &mut out);
        let n = out.len() / self.spec.out_channels;
        buf.drain(..(n * self.spec.stride).min(frames) * cin);
        Tensor::new(vec![n, self.spec.out_channels], out)
    }

    /// Offline convolution of a time-major `[T, cin]` tensor.
    pub fn forward_tm(&self, x: &Tensor) -> Result<Tensor> {
        let t = x.expect_2d("conv input", self.spec.in_channels)?;
        let t_out = self.spec.output_len(t)?;
        let (l, r) = self.spec.pads();
        let cin = self.spec.in_channels;
        let mut out = Vec::with_capacity(t_out * self.spec.out_channels);
        if l == 0 && r == 0 {
            self.run_valid(x.data(), t, &mut out);
        } else {
            let mut padded = vec![0.0; (t + l + r) * cin];
            padded[l * cin..(l + t) * cin].copy_from_slice(x.data());
            self.run_valid(&padded, t + l + r, &mut out);
        }
        Tensor::new(vec![t_out, self.spec.out_channels], out)
    }

    /// Streams one time-major chunk through a causal convolution.
    pub fn step_tm(&self, x: &Tensor, cache: &mut ConvCache) -> Result<Tensor> {
        if !self.spec.is_causal() {
            return Err(Error::Unsupported(
                "streaming requires a causal convolution".into(),
            ));
        }
        let c = x.expect_2d("conv chunk", self.spec.in_channels)?;
        if c % self.spec.stride != 0 {
            return Err(Error::InvalidChunk(format!(
                "chunk of {c} frames is not a multiple of stride {}",
                self.spec.stride
            )));
        }
        if cache.channels != self.spec.in_channels || cache.frames() != self.spec.context() {
            return Err(Error::Shape("conv cache does not match layer".into()));
        }
        let cin = self.spec.in_channels;
        let ctx = self.spec.context();
        let mut buf = Vec::with_capacity((ctx + c) * cin);
        buf.extend_from_slice(&cache.buffer);
        buf.extend_from_slice(x.data());
        let mut out = Vec::with_capacity(c / self.spec.stride * self.spec.out_channels);
        self.run_valid(&buf, ctx + c, &mut out);
        let total = ctx + c;
        cache
            .buffer
            .copy_from_slice(&buf[(total - ctx) * cin..total * cin]);
        let n = out.len() / self.spec.out_channels;
        Tensor::new(vec![n, self.spec.out_channels], out)
    }
}

/// Channel-major convolution: `x` is `[C, T]`, `w` is `[C', C, k]`.
pub fn conv1d(x: &Tensor, spec: &ConvSpec, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let layer = Conv1d::new(*spec, w, b)?;
    check_channel_major(x, spec)?;
    layer.forward_tm(&x.transpose()?)?.transpose()
}

/// Channel-major streaming step; returns the `[C', c']` output and updates
/// `cache` in place.
pub fn conv1d_streaming_step(
    x_chunk: &Tensor,
    cache: &mut ConvCache,
    spec: &ConvSpec,
    w: &Tensor,
    b: &Tensor,
) -> Result<Tensor> {
    if !spec.is_causal() {
        return Err(Error::Unsupported(
            "streaming requires a causal convolution".into(),
        ));
    }
    let layer = Conv1d::new(*spec, w, b)?;
    check_channel_major(x_chunk, spec)?;
    layer.step_tm(&x_chunk.transpose()?, cache)?.transpose()
}

fn check_channel_major(x: &Tensor, spec: &ConvSpec) -> Result<()> {
    if x.shape().len() != 2 || x.shape()[0] != spec.in_channels {
        return Err(Error::Shape(format!(
            "conv input {:?}, expected [{}, T]",
            x.shape(),
            spec.in_channels
        )));
    }
    Ok(())
}

/// Nearest-neighbour upsampling along time of a `[C, T]` tensor.
pub fn nearest_upsample(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::InvalidFactor(factor));
    }
    if x.shape().len() != 2 {
        return Err(Error::Shape(format!("upsample input {:?}", x.shape())));
    }
    let (c, t) = (x.shape()[0], x.shape()[1]);
    let mut out = Vec::with_capacity(c * t * factor);
    for ch in 0..c {
        for &v in x.row(ch) {
            out.extend(std::iter::repeat_n(v, factor));
        }
    }
    Tensor::new(vec![c, t * factor], out)
}

/// Time-major variant: each `[C]` row of `[T, C]` repeated `factor` times.
pub fn nearest_upsample_tm(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::InvalidFactor(factor));
    }
    let (t, c) = (x.rows(), x.cols());
    let mut out = Vec::with_capacity(t * c * factor);
    for r in 0..t {
        for _ in 0..factor {
            out.extend_from_slice(x.row(r));
        }
    }
    Tensor::new(vec![t * factor, c], out)
}
