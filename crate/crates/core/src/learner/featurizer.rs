use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::datapipe::split_tokens;

pub const DEFAULT_DIMENSION: usize = 1 << 18;

/// Sparse vector with strictly increasing indices and no zero entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Builds from unordered `(index, value)` pairs, summing duplicates.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some((last, acc)) if *last == i => *acc += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        Self { entries }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i as u32, v))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i as usize]).sum()
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Signed feature hashing of whitespace-separated tokens into a
/// power-of-two number of buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedFeaturizer {
    dimension: usize,
    seed: u64,
}

impl HashedFeaturizer {
    pub fn new(dimension: usize, seed: u64) -> Result<Self, LearnerError> {
        if dimension < 2 || !dimension.is_power_of_two() || dimension > u32::MAX as usize {
            return Err(LearnerError::InvalidConfig(format!(
                "hash dimension must be a power of two in [2, 2^31], got {dimension}"
            )));
        }
        Ok(Self { dimension, seed })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bucket index and sign (+1 / -1) of one token.
    pub fn bucket(&self, token: &str) -> (u32, f64) {
        let h = mix(fnv1a(self.seed, token.as_bytes()));
        let index = (h & (self.dimension as u64 - 1)) as u32;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        (index, sign)
    }

    pub fn featurize(&self, text: &str) -> SparseVector {
        SparseVector::from_pairs(
            split_tokens(text)
                .map(|t| self.bucket(t))
                .collect(),
        )
    }
}
