//! Core dataset records and collections.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which caption survived filtering. Absent on unfiltered records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionSource {
    Original,
    Generated,
}

/// One captioned image. `caption` is always present; a generated
/// alternative and image-text match scores are optional until filtering,
/// which requires scores for both captions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub id: String,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub itm_original: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub itm_generated: Option<f64>,
    /// Ground-truth class name, used only to label probe validation and
    /// evaluation splits. Training never reads it when forming pairs,
    /// batches, or losses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<CaptionSource>,
}

impl CaptionRecord {
    /// Structural checks on a single record: nonempty id, scores in
    /// [0, 1], and a generated score only alongside a generated caption.
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("record has an empty id".into()));
        }
        for (field, score) in [
            ("itm_original", self.itm_original),
            ("itm_generated", self.itm_generated),
        ] {
            if let Some(s) = score {
                if !(0.0..=1.0).contains(&s) || !s.is_finite() {
                    return Err(Error::Validation(format!(
                        "id {:?}: {field} = {s} is outside [0, 1]",
                        self.id
                    )));
                }
            }
        }
        if self.itm_generated.is_some() && self.generated_caption.is_none() {
            return Err(Error::Validation(format!(
                "id {:?}: itm_generated without generated_caption",
                self.id
            )));
        }
        Ok(())
    }
}

/// Checks every record and rejects duplicate ids.
pub fn validate_records(records: &[CaptionRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        r.validate()?;
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId { id: r.id.clone() });
        }
    }
    Ok(())
}

/// Row-major matrix of unit-norm `f32` embeddings with one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Norm tolerance for rows: each row must satisfy |norm - 1| <= 1e-6.
    pub const NORM_TOL: f64 = 1e-6;

    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dim must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Validation(format!(
                "embedding data has {} values, expected {} ids x {} dims",
                data.len(),
                ids.len(),
                dim
            )));
        }
        let m = EmbeddingMatrix { ids, dim, data };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.ids.len());
        for id in &self.ids {
            if id.is_empty() {
                return Err(Error::Validation("embedding row has an empty id".into()));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId { id: id.clone() });
            }
        }
        for (i, row) in self.rows().enumerate() {
            let mut sq = 0.0f64;
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "embedding row {} ({:?}) has a non-finite value",
                        i, self.ids[i]
                    )));
                }
                sq += f64::from(v) * f64::from(v);
            }
            let norm = sq.sqrt();
            if (norm - 1.0).abs() > Self::NORM_TOL {
                return Err(Error::Validation(format!(
                    "embedding row {} ({:?}) has norm {norm}, expected 1",
                    i, self.ids[i]
                )));
            }
        }
        Ok(())
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[must_use]
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    #[must_use]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[must_use]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Map from id to row index.
    #[must_use]
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

/// One mined pair: a query image and its nearest neighbor in caption
/// embedding space, with the cosine similarity that won.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub query_id: String,
    pub neighbor_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairManifest {
    pub entries: Vec<PairEntry>,
}

impl PairManifest {
    /// Structural checks, plus id resolution against an embedding matrix
    /// when one is given.
    pub fn validate(&self, against: Option<&EmbeddingMatrix>) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        let index = against.map(EmbeddingMatrix::id_index);
        for e in &self.entries {
            if e.query_id == e.neighbor_id {
                return Err(Error::Validation(format!(
                    "pair for {:?} points at itself",
                    e.query_id
                )));
            }
            if !seen.insert(e.query_id.as_str()) {
                return Err(Error::DuplicateId {
                    id: e.query_id.clone(),
                });
            }
            if !e.similarity.is_finite() {
                return Err(Error::Validation(format!(
                    "pair for {:?} has non-finite similarity",
                    e.query_id
                )));
            }
            if let Some(idx) = &index {
                for (label, id) in [("query", &e.query_id), ("neighbor", &e.neighbor_id)] {
                    if !idx.contains_key(id.as_str()) {
                        return Err(Error::UnknownId {
                            id: id.clone(),
                            context: format!("{label} id in pair manifest"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Map from query id to neighbor id.
    #[must_use]
    pub fn neighbor_of(&self) -> HashMap<&str, &str> {
        self.entries
            .iter()
            .map(|e| (e.query_id.as_str(), e.neighbor_id.as_str()))
            .collect()
    }
}

/// Images as one flat `f32` buffer, all with the same (C, H, W) shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensorSet {
    pub ids: Vec<String>,
    pub shape: (usize, usize, usize),
    pub data: Vec<f32>,
}

impl ImageTensorSet {
    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Validation(format!(
                "image shape {:?} has a zero dimension",
                self.shape
            )));
        }
        if self.data.len() != self.ids.len() * c * h * w {
            return Err(Error::Validation(format!(
                "image data has {} values, expected {} images x {}",
                self.data.len(),
                self.ids.len(),
                c * h * w
            )));
        }
        let mut seen = HashSet::with_capacity(self.ids.len());
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId { id: id.clone() });
            }
        }
        if !self.data.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("image data has non-finite values".into()));
        }
        Ok(())
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[must_use]
    pub fn pixels_per_image(&self) -> usize {
        self.shape.0 * self.shape.1 * self.shape.2
    }

    #[must_use]
    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.pixels_per_image();
        &self.data[i * n..(i + 1) * n]
    }

    #[must_use]
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

/// Binary foreground masks, one per image, values 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub ids: Vec<String>,
    pub shape: (usize, usize),
    pub data: Vec<u8>,
}

impl MaskSet {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.shape;
        if h == 0 || w == 0 {
            return Err(Error::Validation(format!(
                "mask shape {:?} has a zero dimension",
                self.shape
            )));
        }
        if self.data.len() != self.ids.len() * h * w {
            return Err(Error::Validation(format!(
                "mask data has {} values, expected {} masks x {}",
                self.data.len(),
                self.ids.len(),
                h * w
            )));
        }
        let mut seen = HashSet::with_capacity(self.ids.len());
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId { id: id.clone() });
            }
        }
        if let Some(v) = self.data.iter().find(|&&v| v > 1) {
            return Err(Error::Validation(format!(
                "mask value {v} is not 0 or 1"
            )));
        }
        Ok(())
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[must_use]
    pub fn mask(&self, i: usize) -> &[u8] {
        let n = self.shape.0 * self.shape.1;
        &self.data[i * n..(i + 1) * n]
    }

    #[must_use]
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

/// Id-to-class assignments. Class indices are positions in the sorted list
/// of distinct class names, so they are stable across files that list the
/// same classes in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    ids: Vec<String>,
    class_ids: Vec<usize>,
    class_names: Vec<String>,
}

impl LabelTable {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut names: Vec<String> = pairs
            .iter()
            .map(|(_, c)| c.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        names.sort();
        let name_idx: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut ids = Vec::with_capacity(pairs.len());
        let mut class_ids = Vec::with_capacity(pairs.len());
        let mut seen = HashSet::with_capacity(pairs.len());
        for (id, class) in pairs {
            if id.is_empty() || class.is_empty() {
                return Err(Error::Validation("label row with empty id or class".into()));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId { id });
            }
            class_ids.push(name_idx[class.as_str()]);
            ids.push(id);
        }
        Ok(LabelTable {
            ids,
            class_ids,
            class_names: names,
        })
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[must_use]
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    #[must_use]
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    #[must_use]
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_of(&self, id: &str) -> Result<usize> {
        self.ids
            .iter()
            .position(|x| x == id)
            .map(|i| self.class_ids[i])
            .ok_or_else(|| Error::UnknownId {
                id: id.to_string(),
                context: "label table".into(),
            })
    }

    /// Class indices aligned with an external id order.
    pub fn classes_for(&self, ids: &[String]) -> Result<Vec<usize>> {
        let index: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| self.class_ids[i])
                    .ok_or_else(|| Error::UnknownId {
                        id: id.clone(),
                        context: "label table".into(),
                    })
            })
            .collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &str)> {
        self.ids
            .iter()
            .zip(self.class_ids.iter())
            .map(|(id, &c)| (id.as_str(), self.class_names[c].as_str()))
    }
}
