//! Hash-based toy caption embedder.
//!
//! Captions are lowercased and split on non-alphanumeric characters. Each
//! token is hashed (FNV-1a mixed with the seed), and the hash picks one of
//! `dim` buckets plus a sign; token contributions accumulate and the result
//! is L2-normalized. The embedding is a bag of tokens: word order never
//! matters, repeated tokens count twice. Captions with no tokens (or whose
//! contributions cancel exactly) fall back to the first basis vector and
//! are flagged.

use crate::data::types::{CaptionRecord, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::util::splitmix64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Lowercased alphanumeric tokens, in order of appearance.
#[must_use]
pub fn tokenize(caption: &str) -> Vec<String> {
    caption
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn token_hash(token: &str, seed: u64) -> u64 {
    splitmix64(fnv1a(token.as_bytes()) ^ splitmix64(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEmbedding {
    pub vector: Vec<f32>,
    /// True when the caption produced no signal (no tokens, or exact
    /// cancellation) and the fallback basis vector was used instead.
    pub used_fallback: bool,
}

/// Embeds one caption into a unit-norm vector of length `dim`.
pub fn toy_embed(caption: &str, dim: usize, seed: u64) -> Result<ToyEmbedding> {
    if dim < 2 {
        return Err(Error::Config(format!(
            "embedding dim must be at least 2, got {dim}"
        )));
    }
    let mut acc = vec![0.0f64; dim];
    for token in tokenize(caption) {
        let h = token_hash(&token, seed);
        let bucket = ((h >> 1) % dim as u64) as usize;
        let sign = if h & 1 == 1 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut vector = vec![0.0f32; dim];
        vector[0] = 1.0;
        return Ok(ToyEmbedding {
            vector,
            used_fallback: true,
        });
    }
    let vector = acc.iter().map(|v| (v / norm) as f32).collect();
    Ok(ToyEmbedding {
        vector,
        used_fallback: false,
    })
}

/// Embeds the retained caption of every record. Returns the matrix plus
/// the ids that needed the fallback vector.
pub fn embed_captions(
    records: &[CaptionRecord],
    dim: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, Vec<String>)> {
    let mut data = Vec::with_capacity(records.len() * dim);
    let mut fallback_ids = Vec::new();
    for r in records {
        let e = toy_embed(&r.caption, dim, seed)?;
        if e.used_fallback {
            fallback_ids.push(r.id.clone());
        }
        data.extend_from_slice(&e.vector);
    }
    let ids = records.iter().map(|r| r.id.clone()).collect();
    Ok((EmbeddingMatrix::new(ids, dim, data)?, fallback_ids))
}
