//! Nearest-neighbor pair mining over caption embeddings.
//!
//! Two implementations of exact cosine search share one dot-product kernel:
//! [`nn_oracle`] is a plain scalar scan kept as the reference, and
//! [`all_neighbors`] processes queries in blocks, in parallel across query
//! blocks. Both accumulate products in `f64`, visit candidates in ascending
//! index order, and only replace the running best on a strictly greater
//! similarity, so ties resolve to the lowest index and the two
//! implementations return identical results.

use rayon::prelude::*;

use crate::data::types::{EmbeddingMatrix, LabelTable, PairEntry, PairManifest};
use crate::error::{Error, Result};
use crate::nn::tensor::dot_f64;

#[derive(Debug, Clone)]
pub struct NNQueryConfig {
    /// Skip the query row itself. A row's own similarity is 1, so leaving
    /// this off makes every query match itself.
    pub exclude_self: bool,
    /// Queries and candidates are processed in blocks of this many rows.
    pub block_size: usize,
}

impl Default for NNQueryConfig {
    fn default() -> Self {
        NNQueryConfig {
            exclude_self: true,
            block_size: 256,
        }
    }
}

impl NNQueryConfig {
    fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::Config("block_size must be positive".into()));
        }
        Ok(())
    }
}

/// Reference nearest-neighbor search: one query, scalar scan over every
/// candidate. Returns (candidate index, cosine similarity).
pub fn nn_oracle(
    m: &EmbeddingMatrix,
    query: usize,
    cfg: &NNQueryConfig,
) -> Result<(usize, f64)> {
    cfg.validate()?;
    if query >= m.len() {
        return Err(Error::Validation(format!(
            "query index {query} out of bounds for {} rows",
            m.len()
        )));
    }
    let qrow = m.row(query);
    let mut best: Option<(usize, f64)> = None;
    for c in 0..m.len() {
        if cfg.exclude_self && c == query {
            continue;
        }
        let s = dot_f64(qrow, m.row(c));
        match best {
            Some((_, bs)) if s <= bs => {}
            _ => best = Some((c, s)),
        }
    }
    best.ok_or_else(|| {
        Error::NoNeighbor(format!(
            "query {query} has no candidates in a {}-row matrix with exclude_self",
            m.len()
        ))
    })
}

/// Nearest neighbor of every row, blocked over queries and candidates and
/// parallel across query blocks. Work is partitioned by query index alone,
/// so the result is independent of thread count.
pub fn all_neighbors(m: &EmbeddingMatrix, cfg: &NNQueryConfig) -> Result<Vec<(usize, f64)>> {
    cfg.validate()?;
    let n = m.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 && cfg.exclude_self {
        return Err(Error::NoNeighbor(
            "a single-row matrix has no neighbors with exclude_self".into(),
        ));
    }
    let bs = cfg.block_size;
    let num_blocks = n.div_ceil(bs);
    let blocks: Vec<Vec<(usize, f64)>> = (0..num_blocks)
        .into_par_iter()
        .map(|qb| {
            let qstart = qb * bs;
            let qend = (qstart + bs).min(n);
            let mut best = vec![(usize::MAX, f64::NEG_INFINITY); qend - qstart];
            for cb in 0..num_blocks {
                let cstart = cb * bs;
                let cend = (cstart + bs).min(n);
                for (qi, q) in (qstart..qend).enumerate() {
                    let qrow = m.row(q);
                    for c in cstart..cend {
                        if cfg.exclude_self && c == q {
                            continue;
                        }
                        let s = dot_f64(qrow, m.row(c));
                        if s > best[qi].1 {
                            best[qi] = (c, s);
                        }
                    }
                }
            }
            best
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// Mines the nearest-neighbor pair for every row and packages the result
/// as a manifest. Requires `exclude_self`; without it every pair would
/// degenerate to the row itself.
pub fn build_pair_manifest(m: &EmbeddingMatrix, cfg: &NNQueryConfig) -> Result<PairManifest> {
    if !cfg.exclude_self {
        return Err(Error::Config(
            "pair manifests require exclude_self: self-pairs are not usable".into(),
        ));
    }
    if m.len() < 2 {
        return Err(Error::NoNeighbor(format!(
            "need at least 2 rows to mine pairs, got {}",
            m.len()
        )));
    }
    let neighbors = all_neighbors(m, cfg)?;
    let entries = neighbors
        .into_iter()
        .enumerate()
        .map(|(q, (c, s))| PairEntry {
            query_id: m.ids()[q].clone(),
            neighbor_id: m.ids()[c].clone(),
            similarity: s,
        })
        .collect();
    let manifest = PairManifest { entries };
    manifest.validate(Some(m))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestStats {
    pub pairs: usize,
    pub mean_similarity: f64,
    pub min_similarity: f64,
    /// Fraction of pairs whose endpoints share a class. Present only when
    /// a label table is supplied.
    pub same_class_rate: Option<f64>,
}

pub fn manifest_stats(
    manifest: &PairManifest,
    labels: Option<&LabelTable>,
) -> Result<ManifestStats> {
    if manifest.entries.is_empty() {
        return Err(Error::Validation("manifest has no pairs".into()));
    }
    let n = manifest.entries.len() as f64;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    for e in &manifest.entries {
        sum += e.similarity;
        if e.similarity < min {
            min = e.similarity;
        }
    }
    let same_class_rate = match labels {
        None => None,
        Some(t) => {
            let mut same = 0usize;
            for e in &manifest.entries {
                if t.class_of(&e.query_id)? == t.class_of(&e.neighbor_id)? {
                    same += 1;
                }
            }
            Some(same as f64 / n)
        }
    };
    Ok(ManifestStats {
        pairs: manifest.entries.len(),
        mean_similarity: sum / n,
        min_similarity: min,
        same_class_rate,
    })
}
