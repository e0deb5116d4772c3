//! Mel interchange file: `u32` frame count, `u32` bin count (80), then
//! `frames * bins` little-endian `f32` values, frame-major.

use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::model_io::N_MELS;
use crate::tensor::Tensor;

pub fn write_mel_bytes(mel: &Tensor) -> Result<Vec<u8>> {
    let t = mel.expect_2d("mel", N_MELS)?;
    let mut out = Vec::with_capacity(8 + mel.len() * 4);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(N_MELS as u32).to_le_bytes());
    for v in mel.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn read_mel_bytes(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 8 {
        return Err(FormatError::Truncated("mel header").into());
    }
    let frames = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let bins = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if bins != N_MELS {
        return Err(Error::Shape(format!(
            "mel file has {bins} bins, expected {N_MELS}"
        )));
    }
    let need = frames
        .checked_mul(bins * 4)
        .ok_or(FormatError::Truncated("mel payload"))?;
    let body = &bytes[8..];
    if body.len() < need {
        return Err(FormatError::Truncated("mel payload").into());
    }
    if body.len() > need {
        return Err(Error::Shape(format!(
            "mel file has {} trailing bytes",
            body.len() - need
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Tensor::new(vec![frames, bins], data)
}

pub fn write_mel(path: impl AsRef<Path>, mel: &Tensor) -> Result<()> {
    std::fs::write(path, write_mel_bytes(mel)?)?;
    Ok(())
}

pub fn read_mel(path: impl AsRef<Path>) -> Result<Tensor> {
    read_mel_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let mel = Tensor::new(
            vec![3, N_MELS],
            (0..3 * N_MELS).map(|i| i as f32 * 0.5).collect(),
        )
        .unwrap();
        let b = write_mel_bytes(&mel).unwrap();
        assert_eq!(b.len(), 8 + 3 * N_MELS * 4);
        assert_eq!(read_mel_bytes(&b).unwrap(), mel);
        assert!(matches!(
            read_mel_bytes(&b[..b.len() - 1]),
            Err(Error::Format(FormatError::Truncated(_)))
        ));
        let empty =
            read_mel_bytes(&write_mel_bytes(&Tensor::zeros(&[0, N_MELS])).unwrap()).unwrap();
        assert_eq!(empty.rows(), 0);
    }
}
