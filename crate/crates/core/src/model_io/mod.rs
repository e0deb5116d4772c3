//! Model container, configuration and deterministic initialisation.
//!
//! # File layout (`SVCM`, version 1, all integers little-endian)
//!
//! | field            | type                      |
//! |------------------|---------------------------|
//! | magic            | `b"SVCM"`                 |
//! | version          | `u32` = 1                 |
//! | metadata length  | `u64`                     |
//! | metadata         | UTF-8 JSON [`ModelConfig`]|
//! | tensor count     | `u32`                     |
//! | directory entry… | see below                 |
//! | payload length   | `u64`                     |
//! | payload          | `f32` little-endian       |
//!
//! A directory entry is `u16` name length, name bytes, `u8` dtype (`0` =
//! f32), `u8` flags (bit 0 = read-only), `u8` rank, `rank x u32` dims and a
//! `u64` byte offset into the payload.

mod config;
mod format;
mod schema;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{
    validate_chunk_ms, DecoderConfig, EncoderConfig, ModelConfig, RuntimeConfig, VocoderConfig,
    VocoderMode, DEFAULT_CHUNK_MS, DEFAULT_HISTORY_CHUNKS, FRAMES_PER_40MS, HOP_SAMPLES, N_MELS,
    SAMPLE_RATE, SUBSAMPLE,
};
pub use format::{load, load_bytes, save, to_bytes, FORMAT_VERSION, MAGIC};
pub use schema::{is_read_only, tensor_schema, TensorKind, TensorSpec};

use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

/// Named tensors plus the configuration they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
    read_only: BTreeSet<String>,
}

impl Model {
    /// Assembles a model, checking the tensors against the canonical schema.
    pub fn from_parts(config: ModelConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let schema = tensor_schema(&config);
        let expected: BTreeMap<&str, &TensorSpec> =
            schema.iter().map(|s| (s.name.as_str(), s)).collect();
        for (name, t) in &tensors {
            let Some(spec) = expected.get(name.as_str()) else {
                return Err(FormatError::UnknownTensor(name.clone()).into());
            };
            if t.shape() != spec.shape.as_slice() {
                return Err(FormatError::ShapeMismatch {
                    name: name.clone(),
                    expected: spec.shape.clone(),
                    found: t.shape().to_vec(),
                }
                .into());
            }
            if !t.all_finite() {
                return Err(Error::NonFinite(format!("tensor `{name}`")));
            }
        }
        if let Some(missing) = schema.iter().find(|s| !tensors.contains_key(&s.name)) {
            return Err(FormatError::MissingTensor(missing.name.clone()).into());
        }
        let read_only = schema
            .iter()
            .filter(|s| s.read_only())
            .map(|s| s.name.clone())
            .collect();
        Ok(Self {
            config,
            tensors,
            read_only,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| FormatError::MissingTensor(name.to_string()).into())
    }

    /// Mutable access for fine-tuning style edits; frozen tensors refuse.
    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        if self.read_only.contains(name) {
            return Err(FormatError::ReadOnly(name.to_string()).into());
        }
        self.tensors
            .get_mut(name)
            .ok_or_else(|| FormatError::MissingTensor(name.to_string()).into())
    }

    pub fn is_read_only(&self, name: &str) -> bool {
        self.read_only.contains(name)
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }
}

/// Deterministic random weights: uniform in `±1/sqrt(fan_in)` for weights
/// and biases, unit gain and zero shift for layer norms.
pub fn random_init(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = BTreeMap::new();
    for spec in tensor_schema(config) {
        let n: usize = spec.shape.iter().product();
        let data: Vec<f32> = match spec.kind {
            TensorKind::Weight { fan_in } => {
                let a = 1.0 / (fan_in as f32).sqrt();
                (0..n).map(|_| rng.gen_range(-a..a)).collect()
            }
            TensorKind::Embedding => (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            TensorKind::NormGain => vec![1.0; n],
            TensorKind::NormShift => vec![0.0; n],
        };
        tensors.insert(spec.name, Tensor::new(spec.shape, data)?);
    }
    Model::from_parts(config.clone(), tensors)
}
