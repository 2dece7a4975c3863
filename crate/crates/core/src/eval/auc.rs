//! Threshold-free scoring of saliency maps against binary masks.
//!
//! Every pixel becomes one scored example: its saliency value is the score
//! and its mask bit is the label. Pixels from all images are pooled into a
//! single ranking, so images with large objects weigh more than images with
//! small ones, in proportion to their pixel counts.

use crate::data::types::MaskSet;
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Ranking quality of pooled saliency pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct AucResult {
    /// Area under the ROC curve, ties handled by midranks. 0.5 means the
    /// map ranks foreground no better than chance.
    pub auc_roc: f64,
    /// Area under the precision-recall curve by rectangular steps over
    /// distinct score thresholds.
    pub auc_pr: f64,
    /// Pooled foreground pixel count.
    pub positives: usize,
    /// Pooled background pixel count.
    pub negatives: usize,
}

/// AUC-ROC and AUC-PR for a pooled set of scored binary examples.
///
/// The set must contain at least one positive and one negative. AUC-ROC uses
/// the rank-sum form with midranks for tied scores, so it equals the
/// probability that a random positive outscores a random negative, counting
/// ties as half. AUC-PR sums precision-weighted recall increments over the
/// distinct thresholds, processing tied scores as one group.
pub fn auc_scores(scores: &[f64], positive: &[bool]) -> Result<AucResult> {
    if scores.len() != positive.len() {
        return Err(Error::Validation(format!(
            "{} scores but {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("scores contain non-finite values".into()));
    }
    let p = positive.iter().filter(|x| **x).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::Validation(format!(
            "AUC needs both classes, got {p} positives and {n} negatives"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Rank-sum AUC-ROC: ranks are 1-based over ascending scores, tied
    // scores all receive the mean rank of their block.
    let mut pos_rank_sum = 0.0f64;
    let mut i = 0usize;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if positive[idx] {
                pos_rank_sum += midrank;
            }
        }
        i = j;
    }
    let pf = p as f64;
    let nf = n as f64;
    let auc_roc = (pos_rank_sum - pf * (pf + 1.0) / 2.0) / (pf * nf);

    // Step AUC-PR: walk thresholds from the highest score down, admitting
    // each tied block at once, and accumulate precision * recall-gain.
    let mut auc_pr = 0.0f64;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0f64;
    let mut i = order.len();
    while i > 0 {
        let mut j = i;
        while j > 0 && scores[order[j - 1]] == scores[order[i - 1]] {
            j -= 1;
        }
        for &idx in &order[j..i] {
            if positive[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / pf;
        let precision = tp as f64 / (tp + fp) as f64;
        auc_pr += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }

    Ok(AucResult { auc_roc, auc_pr, positives: p, negatives: n })
}

/// Scores saliency maps against foreground masks, pooling pixels across the
/// whole set. `maps[i]` must be a 2-D tensor matching the mask shape and
/// correspond to `masks.ids[i]`.
pub fn saliency_auc(maps: &[Tensor<f32>], masks: &MaskSet) -> Result<AucResult> {
    masks.validate()?;
    if maps.len() != masks.len() {
        return Err(Error::Validation(format!(
            "{} saliency maps but {} masks",
            maps.len(),
            masks.len()
        )));
    }
    let (h, w) = masks.shape;
    let mut scores = Vec::with_capacity(maps.len() * h * w);
    let mut labels = Vec::with_capacity(maps.len() * h * w);
    for (i, map) in maps.iter().enumerate() {
        if map.shape() != [h, w] {
            return Err(Error::Validation(format!(
                "saliency map {i} has shape {:?}, masks are {h}x{w}",
                map.shape()
            )));
        }
        for (&s, &m) in map.data().iter().zip(masks.mask(i).iter()) {
            scores.push(f64::from(s));
            labels.push(m == 1);
        }
    }
    auc_scores(&scores, &labels)
}

/// AUC averaged per image instead of pooled across pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PerImageAuc {
    /// Unweighted mean of per-image AUC-ROC over scored images.
    pub mean_auc_roc: f64,
    /// Unweighted mean of per-image AUC-PR over scored images.
    pub mean_auc_pr: f64,
    /// Images whose mask held both classes.
    pub scored: usize,
    /// Images skipped because their mask was all foreground or all
    /// background (per-image AUC undefined there).
    pub skipped: usize,
}

/// Per-image alternative to [`saliency_auc`]: each image is scored on its
/// own pixels and the AUCs are averaged with equal weight per image, so
/// small objects count as much as large ones. Single-class masks are
/// skipped; at least one image must be scorable.
pub fn saliency_auc_per_image(maps: &[Tensor<f32>], masks: &MaskSet) -> Result<PerImageAuc> {
    masks.validate()?;
    if maps.len() != masks.len() {
        return Err(Error::Validation(format!(
            "{} saliency maps but {} masks",
            maps.len(),
            masks.len()
        )));
    }
    let (h, w) = masks.shape;
    let mut roc_sum = 0.0f64;
    let mut pr_sum = 0.0f64;
    let mut scored = 0usize;
    let mut skipped = 0usize;
    for (i, map) in maps.iter().enumerate() {
        if map.shape() != [h, w] {
            return Err(Error::Validation(format!(
                "saliency map {i} has shape {:?}, masks are {h}x{w}",
                map.shape()
            )));
        }
        let mask = masks.mask(i);
        let fg = mask.iter().filter(|&&m| m == 1).count();
        if fg == 0 || fg == mask.len() {
            skipped += 1;
            continue;
        }
        let scores: Vec<f64> = map.data().iter().map(|&s| f64::from(s)).collect();
        let labels: Vec<bool> = mask.iter().map(|&m| m == 1).collect();
        let out = auc_scores(&scores, &labels)?;
        roc_sum += out.auc_roc;
        pr_sum += out.auc_pr;
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::Validation(
            "every mask is single-class; per-image AUC is undefined".into(),
        ));
    }
    Ok(PerImageAuc {
        mean_auc_roc: roc_sum / scored as f64,
        mean_auc_pr: pr_sum / scored as f64,
        scored,
        skipped,
    })
}
