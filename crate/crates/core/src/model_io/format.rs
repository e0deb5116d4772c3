use std::collections::BTreeMap;
use std::path::Path;

use super::config::ModelConfig;
use super::schema::tensor_schema;
use super::Model;
use crate::error::{FormatError, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"SVCM";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const FLAG_READ_ONLY: u8 = 1;

pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(model.config())?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);

    let schema = tensor_schema(model.config());
    out.extend_from_slice(&(schema.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for spec in &schema {
        let t = model.tensor(&spec.name)?;
        let name = spec.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(DTYPE_F32);
        out.push(if model.is_read_only(&spec.name) {
            FLAG_READ_ONLY
        } else {
            0
        });
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * t.len() as u64;
    }
    out.extend_from_slice(&offset.to_le_bytes());
    for spec in &schema {
        for v in model.tensor(&spec.name)?.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    load_bytes(&std::fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(FormatError::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

pub fn load_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic).into());
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let meta_len = r.u64("metadata length")?;
    let meta = r.take(
        usize::try_from(meta_len).map_err(|_| FormatError::Truncated("metadata"))?,
        "metadata",
    )?;
    let config: ModelConfig = serde_json::from_slice(meta)?;
    config.validate()?;

    let count = r.u32("tensor count")?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let name_len = r.u16("tensor name length")? as usize;
        let name = String::from_utf8_lossy(r.take(name_len, "tensor name")?).into_owned();
        let dtype = r.u8("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(FormatError::UnsupportedDtype(dtype).into());
        }
        // Encoder tensors are frozen whatever the stored flag says.
        let _flags = r.u8("flags")?;
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let offset = r.u64("tensor offset")?;
        entries.push(Entry {
            name,
            shape,
            offset,
        });
    }
    let payload_len = r.u64("payload length")?;
    let payload = r.take(
        usize::try_from(payload_len).map_err(|_| FormatError::Truncated("payload"))?,
        "payload",
    )?;

    // Non-overlap: sort spans by offset and check each ends before the next.
    let mut spans: Vec<(u64, u64, &str)> = entries
        .iter()
        .map(|e| {
            let bytes = 4 * e.shape.iter().product::<usize>() as u64;
            (e.offset, e.offset.saturating_add(bytes), e.name.as_str())
        })
        .collect();
    spans.sort();
    for w in spans.windows(2) {
        if w[0].1 > w[1].0 {
            return Err(FormatError::BadOffset(w[1].2.to_string()).into());
        }
    }
    if let Some(last) = spans.last() {
        if last.1 > payload_len {
            return Err(FormatError::BadOffset(last.2.to_string()).into());
        }
    }

    let schema: BTreeMap<String, Vec<usize>> = tensor_schema(&config)
        .into_iter()
        .map(|s| (s.name, s.shape))
        .collect();
    let mut tensors = BTreeMap::new();
    for e in entries {
        let Some(expected) = schema.get(&e.name) else {
            return Err(FormatError::UnknownTensor(e.name).into());
        };
        if *expected != e.shape {
            return Err(FormatError::ShapeMismatch {
                name: e.name,
                expected: expected.clone(),
                found: e.shape,
            }
            .into());
        }
        let start = e.offset as usize;
        let n: usize = e.shape.iter().product();
        let data = payload[start..start + 4 * n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::new(e.shape, data)?;
        if tensors.insert(e.name.clone(), t).is_some() {
            return Err(FormatError::DuplicateTensor(e.name).into());
        }
    }
    Model::from_parts(config, tensors)
}
