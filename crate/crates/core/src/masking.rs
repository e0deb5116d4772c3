//! Chunk-based attention masks.
//!
//! A query frame `i` may attend key frame `j` when `j` lies in the same chunk
//! or an earlier one, optionally limited to the `history` most recent earlier
//! chunks. With unlimited history the mask is the Kronecker product of a
//! lower-triangular chunk connectivity matrix with an all-ones `c x c` block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkSpec {
    pub chunk_frames: usize,
    pub num_chunks: usize,
    /// `None` means unlimited history.
    pub history_chunks: Option<usize>,
}

impl ChunkSpec {
    pub fn new(chunk_frames: usize, num_chunks: usize, history_chunks: Option<usize>) -> Self {
        Self {
            chunk_frames,
            num_chunks,
            history_chunks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_frames == 0 {
            return Err(Error::InvalidSpec("chunk_frames must be >= 1".into()));
        }
        if self.num_chunks == 0 {
            return Err(Error::InvalidSpec("num_chunks must be >= 1".into()));
        }
        Ok(())
    }

    pub fn total_frames(&self) -> usize {
        self.chunk_frames * self.num_chunks
    }
}

/// Square boolean matrix, row = query frame, column = key frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    bits: Vec<bool>,
}

impl AttentionMask {
    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                bits.push(f(i, j));
            }
        }
        Self { size, bits }
    }

    pub fn full(size: usize) -> Self {
        Self {
            size,
            bits: vec![true; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, query: usize, key: usize) -> bool {
        self.bits[query * self.size + key]
    }

    pub fn row(&self, query: usize) -> &[bool] {
        &self.bits[query * self.size..(query + 1) * self.size]
    }

    pub fn count_row(&self, query: usize) -> usize {
        self.row(query).iter().filter(|b| **b).count()
    }

    /// One line per row, `1` for visible and `0` for masked.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.size * (self.size + 1));
        for i in 0..self.size {
            s.extend(self.row(i).iter().map(|b| if *b { '1' } else { '0' }));
            s.push('\n');
        }
        s
    }
}

fn visible(query_chunk: usize, key_chunk: usize, history: Option<usize>) -> bool {
    key_chunk <= query_chunk && history.is_none_or(|h| query_chunk - key_chunk <= h)
}

pub fn build_chunk_mask(spec: ChunkSpec) -> Result<AttentionMask> {
    spec.validate()?;
    build_chunk_mask_for_len(spec.total_frames(), spec.chunk_frames, spec.history_chunks)
}

/// Same rule as [`build_chunk_mask`] for a sequence whose length need not be a
/// multiple of the chunk size; the final chunk is then shorter.
pub fn build_chunk_mask_for_len(
    frames: usize,
    chunk_frames: usize,
    history_chunks: Option<usize>,
) -> Result<AttentionMask> {
    if chunk_frames == 0 || frames == 0 {
        return Err(Error::InvalidSpec(
            "chunk_frames and frame count must be >= 1".into(),
        ));
    }
    let c = chunk_frames;
    Ok(AttentionMask::from_fn(frames, |i, j| {
        visible(i / c, j / c, history_chunks)
    }))
}

/// Seedable uniform sampler of chunk sizes in `[min, max]`.
#[derive(Debug, Clone)]
pub struct DynamicChunkSampler {
    min: usize,
    max: usize,
    rng: ChaCha8Rng,
}

impl DynamicChunkSampler {
    pub fn new(min: usize, max: usize, seed: u64) -> Result<Self> {
        if min == 0 {
            return Err(Error::InvalidRange { min, max });
        }
        if min > max {
            return Err(Error::InvalidRange { min, max });
        }
        Ok(Self {
            min,
            max,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn sample(&mut self) -> usize {
        self.rng.gen_range(self.min..=self.max)
    }
}

/// A single draw from a freshly seeded sampler.
pub fn sample_dynamic_chunk(range_min: usize, range_max: usize, rng_seed: u64) -> Result<usize> {
    Ok(DynamicChunkSampler::new(range_min, range_max, rng_seed)?.sample())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kron_oracle(num_chunks: usize, c: usize) -> Vec<Vec<bool>> {
        let tri: Vec<Vec<bool>> = (0..num_chunks)
            .map(|a| (0..num_chunks).map(|b| b <= a).collect())
            .collect();
        let t = num_chunks * c;
        let mut out = vec![vec![false; t]; t];
        for (a, tri_row) in tri.iter().enumerate() {
            for (b, &cell) in tri_row.iter().enumerate() {
                for p in 0..c {
                    for q in 0..c {
                        out[a * c + p][b * c + q] = cell;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_published_six_by_six() {
        let m = build_chunk_mask(ChunkSpec::new(2, 3, None)).unwrap();
        assert_eq!(
            m.to_text(),
            "110000\n110000\n111100\n111100\n111111\n111111\n"
        );
    }

    #[test]
    fn single_frame() {
        let m = build_chunk_mask(ChunkSpec::new(1, 1, None)).unwrap();
        assert_eq!(m.to_text(), "1\n");
    }

    #[test]
    fn history_one_drops_first_chunk_for_last() {
        let m = build_chunk_mask(ChunkSpec::new(2, 3, Some(1))).unwrap();
        assert_eq!(
            m.to_text(),
            "110000\n110000\n111100\n111100\n001111\n001111\n"
        );
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(matches!(
            build_chunk_mask(ChunkSpec::new(0, 3, None)),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            build_chunk_mask(ChunkSpec::new(2, 0, None)),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn partial_final_chunk() {
        let m = build_chunk_mask_for_len(5, 2, None).unwrap();
        assert_eq!(m.to_text(), "11000\n11000\n11110\n11110\n11111\n");
    }

    #[test]
    fn degenerate_range() {
        for seed in 0..20 {
            assert_eq!(sample_dynamic_chunk(4, 4, seed).unwrap(), 4);
        }
        let v = sample_dynamic_chunk(2, 3, 0).unwrap();
        assert!(v == 2 || v == 3);
        assert!(matches!(
            sample_dynamic_chunk(5, 4, 0),
            Err(Error::InvalidRange { .. })
        ));
        assert!(sample_dynamic_chunk(0, 4, 0).is_err());
    }

    #[test]
    fn dynamic_chunk_is_uniform() {
        let mut s = DynamicChunkSampler::new(1, 16, 7).unwrap();
        let mut counts = [0usize; 17];
        let n = 10_000;
        for _ in 0..n {
            counts[s.sample()] += 1;
        }
        assert_eq!(counts[0], 0);
        let expected = n as f64 / 16.0;
        for &c in &counts[1..] {
            assert!(c > 0);
            assert!(
                ((c as f64) - expected).abs() <= 0.2 * expected,
                "{counts:?}"
            );
        }
        // Same seed, same sequence.
        let mut a = DynamicChunkSampler::new(1, 16, 7).unwrap();
        let mut b = DynamicChunkSampler::new(1, 16, 7).unwrap();
        assert!((0..100).all(|_| a.sample() == b.sample()));
    }

    proptest! {
        #[test]
        fn kronecker_equivalence(c in 1usize..6, n in 1usize..8) {
            let m = build_chunk_mask(ChunkSpec::new(c, n, None)).unwrap();
            let oracle = kron_oracle(n, c);
            for (i, row) in oracle.iter().enumerate() {
                for (j, &bit) in row.iter().enumerate() {
                    prop_assert_eq!(m.get(i, j), bit);
                }
            }
        }

        #[test]
        fn causal_nested_and_row_sums(c in 1usize..5, n in 1usize..8, h in 0usize..8) {
            let limited = build_chunk_mask(ChunkSpec::new(c, n, Some(h))).unwrap();
            let wider = build_chunk_mask(ChunkSpec::new(c, n, Some(h + 1))).unwrap();
            let full = build_chunk_mask(ChunkSpec::new(c, n, None)).unwrap();
            for i in 0..c * n {
                prop_assert_eq!(limited.count_row(i), c * ((i / c).min(h) + 1));
                prop_assert_eq!(full.count_row(i), c * (i / c + 1));
                prop_assert!(limited.count_row(i) >= 1);
                for j in 0..c * n {
                    if j / c > i / c {
                        prop_assert!(!full.get(i, j));
                    }
                    prop_assert!(!limited.get(i, j) || wider.get(i, j));
                    prop_assert!(!wider.get(i, j) || full.get(i, j));
                }
            }
        }
    }
}
