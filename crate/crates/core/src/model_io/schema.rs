//! Canonical tensor names and shapes for a [`ModelConfig`].

use super::config::{ModelConfig, N_MELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    /// Uniform in `±1/sqrt(fan_in)`.
    Weight { fan_in: usize },
    /// Layer-norm gain, initialised to one.
    NormGain,
    /// Layer-norm shift, initialised to zero.
    NormShift,
    /// Speaker embedding rows.
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: TensorKind,
}

impl TensorSpec {
    /// Encoder tensors are frozen.
    pub fn read_only(&self) -> bool {
        is_read_only(&self.name)
    }
}

pub fn is_read_only(name: &str) -> bool {
    name.starts_with("encoder.")
}

struct Builder(Vec<TensorSpec>);

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, kind: TensorKind) {
        self.0.push(TensorSpec { name, shape, kind });
    }

    fn linear(&mut self, prefix: &str, din: usize, dout: usize) {
        let kind = TensorKind::Weight { fan_in: din };
        self.push(format!("{prefix}.weight"), vec![din, dout], kind);
        self.push(format!("{prefix}.bias"), vec![dout], kind);
    }

    fn conv(&mut self, prefix: &str, cin: usize, cout: usize, k: usize) {
        let kind = TensorKind::Weight { fan_in: cin * k };
        self.push(format!("{prefix}.weight"), vec![cout, cin, k], kind);
        self.push(format!("{prefix}.bias"), vec![cout], kind);
    }

    fn norm(&mut self, prefix: &str, d: usize) {
        self.push(format!("{prefix}.weight"), vec![d], TensorKind::NormGain);
        self.push(format!("{prefix}.bias"), vec![d], TensorKind::NormShift);
    }

    fn attention(&mut self, prefix: &str, d: usize) {
        for p in ["q", "k", "v", "o"] {
            self.linear(&format!("{prefix}.{p}"), d, d);
        }
    }
}

pub fn tensor_schema(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let mut b = Builder(Vec::new());
    let e = &cfg.encoder;
    b.conv("encoder.subsample.conv1", N_MELS, e.d_model, 3);
    b.conv("encoder.subsample.conv2", e.d_model, e.d_model, 3);
    b.linear("encoder.subsample.out", e.d_model, e.d_model);
    for i in 0..e.layers {
        let p = format!("encoder.layers.{i}");
        b.norm(&format!("{p}.norm1"), e.d_model);
        b.attention(&format!("{p}.attn"), e.d_model);
        b.norm(&format!("{p}.norm2"), e.d_model);
        b.linear(&format!("{p}.ff1"), e.d_model, e.ff_dim);
        b.linear(&format!("{p}.ff2"), e.ff_dim, e.d_model);
    }
    b.norm("encoder.final_norm", e.d_model);
    b.linear("encoder.ppg", e.d_model, e.ppg_dim);

    let d = &cfg.decoder;
    b.linear("decoder.input", e.ppg_dim, d.d_model);
    b.push(
        "decoder.speaker_embedding".into(),
        vec![d.speakers, d.d_model],
        TensorKind::Embedding,
    );
    for i in 0..d.layers {
        let p = format!("decoder.blocks.{i}");
        b.attention(&format!("{p}.attn"), d.d_model);
        b.norm(&format!("{p}.norm1"), d.d_model);
        b.conv(&format!("{p}.conv1"), d.d_model, d.ff_dim, d.conv_kernel);
        b.conv(&format!("{p}.conv2"), d.ff_dim, d.d_model, 1);
        b.norm(&format!("{p}.norm2"), d.d_model);
    }
    b.linear("decoder.mel", d.d_model, N_MELS);

    let v = &cfg.vocoder;
    let ch = v.stage_channels();
    b.conv("vocoder.conv_pre", N_MELS, ch[0], v.pre_kernel);
    for (i, &k) in v.upsample_kernel_sizes.iter().enumerate() {
        b.conv(&format!("vocoder.ups.{i}"), ch[i], ch[i + 1], k);
        for (j, (&rk, dils)) in v
            .resblock_kernel_sizes
            .iter()
            .zip(&v.resblock_dilations)
            .enumerate()
        {
            for l in 0..dils.len() {
                let p = format!("vocoder.resblocks.{i}.{j}");
                b.conv(&format!("{p}.convs1.{l}"), ch[i + 1], ch[i + 1], rk);
                b.conv(&format!("{p}.convs2.{l}"), ch[i + 1], ch[i + 1], rk);
            }
        }
    }
    b.conv(
        "vocoder.conv_post",
        *ch.last().expect("at least one stage"),
        v.pqmf.num_bands,
        v.post_kernel,
    );
    b.0
}
