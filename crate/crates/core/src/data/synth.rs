//! Synthetic captioned-image benchmark generator.
//!
//! Each class is a colored shape template (disc, square, plus, diagonal
//! stripe, or ring, cycling by class index) at a class-specific position
//! with a class-specific color. A sample is its class template plus
//! per-pixel Gaussian noise, so with sigma = 0 all samples of a class are
//! pixel-identical. Captions are a class-specific token phrase plus a few
//! distractor tokens drawn from a vocabulary shared across classes; masks
//! mark the template's support.
//!
//! After generating, the captions are embedded and every caption's nearest
//! neighbor is checked: generation fails unless at least
//! [`SELF_TEST_MIN_RATE`] of nearest neighbors share the query's class,
//! which is what makes caption-space pair mining a usable supervision
//! signal downstream.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::embed::embed_captions;
use crate::data::types::{
    validate_records, CaptionRecord, EmbeddingMatrix, ImageTensorSet, LabelTable, MaskSet,
};
use crate::error::{Error, Result};
use crate::pairs::{build_pair_manifest, manifest_stats, NNQueryConfig};
use crate::util::mix_seed;

/// Minimum fraction of caption nearest neighbors that must share the
/// query's class for generation to succeed.
pub const SELF_TEST_MIN_RATE: f64 = 0.95;

/// Embedding width used by the generator's own nearest-neighbor check.
pub const SELF_TEST_EMBED_DIM: usize = 64;

/// ITM score attached to every clean generated caption; they match their
/// image by construction.
pub const CLEAN_ITM_SCORE: f64 = 0.9;

/// ITM score attached to a corrupted caption; it describes a different
/// class's image by construction.
pub const CORRUPT_ITM_SCORE: f64 = 0.2;

const TEMPLATE_SALT: u64 = 0x7e31;
const SAMPLE_SALT: u64 = 0x5a02;
const CORRUPT_SALT: u64 = 0xc0a7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionVocabSpec {
    /// Number of class-specific tokens in every caption of a class.
    pub phrase_len: usize,
    /// Size of the distractor vocabulary shared by all classes.
    pub distractor_vocab: usize,
    /// Distractor tokens per caption, sampled without replacement.
    pub distractors_per_caption: usize,
}

impl Default for CaptionVocabSpec {
    fn default() -> Self {
        CaptionVocabSpec {
            phrase_len: 3,
            distractor_vocab: 24,
            distractors_per_caption: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub per_class: usize,
    pub image_shape: (usize, usize, usize),
    /// Standard deviation of the per-pixel sample noise.
    pub noise_sigma: f64,
    pub vocab: CaptionVocabSpec,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 5,
            per_class: 200,
            image_shape: (3, 16, 16),
            noise_sigma: 0.25,
            vocab: CaptionVocabSpec::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.per_class < 2 {
            return Err(Error::Config(format!(
                "need at least 2 samples per class, got {}",
                self.per_class
            )));
        }
        let (c, h, w) = self.image_shape;
        if c == 0 {
            return Err(Error::Config("images need at least one channel".into()));
        }
        if h < 8 || w < 8 {
            return Err(Error::Config(format!(
                "image size {h}x{w} is too small for shape templates (minimum 8x8)"
            )));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        if self.vocab.phrase_len == 0 {
            return Err(Error::Config("phrase_len must be positive".into()));
        }
        if self.vocab.distractors_per_caption > self.vocab.distractor_vocab {
            return Err(Error::Config(format!(
                "cannot draw {} distinct distractors from a vocabulary of {}",
                self.vocab.distractors_per_caption, self.vocab.distractor_vocab
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub images: ImageTensorSet,
    pub captions: Vec<CaptionRecord>,
    pub masks: MaskSet,
    pub labels: LabelTable,
    /// Fraction of caption nearest neighbors sharing the query's class,
    /// from the generator's self-check.
    pub nn_same_class_rate: f64,
}

struct Template {
    /// (C, H, W) pixel values, background zero.
    pixels: Vec<f32>,
    /// (H, W) support mask.
    mask: Vec<u8>,
}

fn paint_template(kind: usize, rng: &mut ChaCha8Rng, shape: (usize, usize, usize)) -> Template {
    let (c, h, w) = shape;
    let color: Vec<f64> = (0..c).map(|_| rng.random_range(0.3..0.9)).collect();
    let hf = h as f64;
    let wf = w as f64;
    let cx = rng.random_range(wf * 0.3..wf * 0.7);
    let cy = rng.random_range(hf * 0.3..hf * 0.7);
    let r = rng.random_range(hf / 6.0..hf / 4.0);
    let thickness = (hf / 10.0).max(1.2);

    let mut pixels = vec![0.0f32; c * h * w];
    let mut mask = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let dist = (dx * dx + dy * dy).sqrt();
            let inside = match kind {
                0 => dist <= r,
                1 => dx.abs() <= r && dy.abs() <= r,
                2 => (dx.abs() <= thickness && dy.abs() <= r * 1.4)
                    || (dy.abs() <= thickness && dx.abs() <= r * 1.4),
                3 => (dx - dy).abs() <= thickness && dx.abs() <= r * 1.6 && dy.abs() <= r * 1.6,
                _ => dist <= r + 1.0 && dist > (r + 1.0) * 0.55,
            };
            if inside {
                mask[y * w + x] = 1;
                for ch in 0..c {
                    pixels[(ch * h + y) * w + x] = color[ch] as f32;
                }
            }
        }
    }
    Template { pixels, mask }
}

/// Draws `count` distinct values from `0..vocab` by partial Fisher-Yates.
fn sample_distinct(rng: &mut ChaCha8Rng, vocab: usize, count: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..vocab).collect();
    for i in 0..count {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

pub fn gen_synthetic(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let (c, h, w) = cfg.image_shape;
    let n = cfg.num_classes * cfg.per_class;

    let mut templates = Vec::with_capacity(cfg.num_classes);
    for k in 0..cfg.num_classes {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, TEMPLATE_SALT, k as u64]));
        let t = paint_template(k % 5, &mut rng, cfg.image_shape);
        let ones: usize = t.mask.iter().map(|&v| v as usize).sum();
        if ones == 0 || ones == h * w {
            return Err(Error::Validation(format!(
                "template for class {k} has a degenerate mask"
            )));
        }
        templates.push(t);
    }

    let mut ids = Vec::with_capacity(n);
    let mut image_data = Vec::with_capacity(n * c * h * w);
    let mut mask_data = Vec::with_capacity(n * h * w);
    let mut captions = Vec::with_capacity(n);
    let mut label_pairs = Vec::with_capacity(n);

    for (k, template) in templates.iter().enumerate() {
        let class_name = format!("class{k:03}");
        let phrase: Vec<String> = (0..cfg.vocab.phrase_len)
            .map(|j| format!("c{k}w{j}"))
            .collect();
        for i in 0..cfg.per_class {
            let id = format!("img{:05}", k * cfg.per_class + i);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
                cfg.seed,
                SAMPLE_SALT,
                k as u64,
                i as u64,
            ]));

            let mut pixels = template.pixels.clone();
            if cfg.noise_sigma > 0.0 {
                for p in &mut pixels {
                    let z: f64 = rng.sample(StandardNormal);
                    *p += (cfg.noise_sigma * z) as f32;
                }
            }
            image_data.extend_from_slice(&pixels);
            mask_data.extend_from_slice(&template.mask);

            let mut tokens = phrase.clone();
            for d in sample_distinct(&mut rng, cfg.vocab.distractor_vocab,
                cfg.vocab.distractors_per_caption)
            {
                tokens.push(format!("ctx{d}"));
            }
            captions.push(CaptionRecord {
                id: id.clone(),
                caption: tokens.join(" "),
                generated_caption: None,
                itm_original: Some(CLEAN_ITM_SCORE),
                itm_generated: None,
                class_hint: Some(class_name.clone()),
                source: None,
            });
            label_pairs.push((id.clone(), class_name.clone()));
            ids.push(id);
        }
    }

    let images = ImageTensorSet {
        ids: ids.clone(),
        shape: cfg.image_shape,
        data: image_data,
    };
    images.validate()?;
    let masks = MaskSet {
        ids,
        shape: (h, w),
        data: mask_data,
    };
    masks.validate()?;
    let labels = LabelTable::new(label_pairs)?;

    let nn_same_class_rate = caption_nn_self_test(&captions, &labels, cfg.seed)?;
    if nn_same_class_rate < SELF_TEST_MIN_RATE {
        return Err(Error::Validation(format!(
            "caption self-test failed: only {nn_same_class_rate:.4} of nearest neighbors share \
             the query's class (need {SELF_TEST_MIN_RATE}); captions are too ambiguous to mine \
             pairs from"
        )));
    }

    Ok(SynthDataset {
        images,
        captions,
        masks,
        labels,
        nn_same_class_rate,
    })
}

/// Result of [`corrupt_captions`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionOutcome {
    pub records: Vec<CaptionRecord>,
    /// Ids whose caption was swapped, in input order.
    pub corrupted_ids: Vec<String>,
}

/// Swaps a fraction of captions for the caption of an image from a
/// different class, simulating noisy web data.
///
/// A corrupted record keeps the clean text as its `generated_caption` and
/// carries fixture match scores: [`CORRUPT_ITM_SCORE`] on the swapped-in
/// caption and [`CLEAN_ITM_SCORE`] on the clean one. Filtering such records
/// therefore restores the clean caption, while embedding them unfiltered
/// mines cross-class pairs. Untouched records pass through unchanged.
///
/// Every record needs a `class_hint`, and at least two classes must be
/// present when `fraction > 0` so a donor always exists. The swap count is
/// `fraction` rounded to the nearest whole number of records; donors are
/// drawn from the input snapshot, so a donor's own corruption never
/// cascades.
pub fn corrupt_captions(
    records: &[CaptionRecord],
    fraction: f64,
    seed: u64,
) -> Result<CorruptionOutcome> {
    validate_records(records)?;
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "corruption fraction {fraction} is outside [0, 1]"
        )));
    }
    let n = records.len();
    let k = (fraction * n as f64).round() as usize;
    if k == 0 {
        return Ok(CorruptionOutcome {
            records: records.to_vec(),
            corrupted_ids: Vec::new(),
        });
    }
    let mut classes = Vec::with_capacity(n);
    for r in records {
        match &r.class_hint {
            Some(c) => classes.push(c.as_str()),
            None => {
                return Err(Error::Validation(format!(
                    "id {:?}: corruption needs a class_hint on every record",
                    r.id
                )))
            }
        }
    }
    let distinct: HashSet<&str> = classes.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Validation(
            "corruption needs at least two classes to draw donors from".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, CORRUPT_SALT]));
    let mut chosen = rand::seq::index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    let mut corrupt = vec![false; n];
    for &i in &chosen {
        corrupt[i] = true;
    }

    let mut out = Vec::with_capacity(n);
    let mut corrupted_ids = Vec::with_capacity(k);
    for (i, r) in records.iter().enumerate() {
        if !corrupt[i] {
            out.push(r.clone());
            continue;
        }
        let donors: Vec<usize> = (0..n).filter(|&j| classes[j] != classes[i]).collect();
        let donor = donors[rng.random_range(0..donors.len())];
        corrupted_ids.push(r.id.clone());
        out.push(CaptionRecord {
            id: r.id.clone(),
            caption: records[donor].caption.clone(),
            generated_caption: Some(r.caption.clone()),
            itm_original: Some(CORRUPT_ITM_SCORE),
            itm_generated: Some(CLEAN_ITM_SCORE),
            class_hint: r.class_hint.clone(),
            source: None,
        });
    }
    Ok(CorruptionOutcome { records: out, corrupted_ids })
}

fn caption_nn_self_test(
    captions: &[CaptionRecord],
    labels: &LabelTable,
    seed: u64,
) -> Result<f64> {
    let (matrix, _): (EmbeddingMatrix, _) =
        embed_captions(captions, SELF_TEST_EMBED_DIM, seed)?;
    let manifest = build_pair_manifest(&matrix, &NNQueryConfig::default())?;
    let stats = manifest_stats(&manifest, Some(labels))?;
    Ok(stats.same_class_rate.expect("labels were supplied"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{filter_captions, FilterPolicy};

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            num_classes: 3,
            per_class: 12,
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_synthetic(&small_cfg()).unwrap();
        let b = gen_synthetic(&small_cfg()).unwrap();
        assert_eq!(a.images, b.images);
        assert_eq!(a.captions, b.captions);
        assert_eq!(a.masks, b.masks);
        assert_eq!(a.nn_same_class_rate, b.nn_same_class_rate);
    }

    #[test]
    fn different_seeds_differ() {
        let a = gen_synthetic(&small_cfg()).unwrap();
        let b = gen_synthetic(&SynthConfig {
            seed: 12,
            ..small_cfg()
        })
        .unwrap();
        assert_ne!(a.images.data, b.images.data);
    }

    #[test]
    fn zero_sigma_gives_identical_images_within_class() {
        let ds = gen_synthetic(&SynthConfig {
            num_classes: 2,
            per_class: 2,
            noise_sigma: 0.0,
            seed: 5,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(ds.images.len(), 4);
        assert_eq!(ds.images.image(0), ds.images.image(1));
        assert_eq!(ds.images.image(2), ds.images.image(3));
        assert_ne!(ds.images.image(0), ds.images.image(2));
    }

    #[test]
    fn masks_have_both_foreground_and_background() {
        let ds = gen_synthetic(&small_cfg()).unwrap();
        for i in 0..ds.masks.len() {
            let m = ds.masks.mask(i);
            assert!(m.contains(&1), "mask {i} is empty");
            assert!(m.contains(&0), "mask {i} is full");
        }
    }

    #[test]
    fn self_test_rate_is_high_on_defaults() {
        let ds = gen_synthetic(&small_cfg()).unwrap();
        assert!(
            ds.nn_same_class_rate >= SELF_TEST_MIN_RATE,
            "rate = {}",
            ds.nn_same_class_rate
        );
    }

    #[test]
    fn captions_carry_hints_and_scores() {
        let ds = gen_synthetic(&small_cfg()).unwrap();
        for r in &ds.captions {
            assert_eq!(r.itm_original, Some(CLEAN_ITM_SCORE));
            assert!(r.class_hint.is_some());
            assert!(r.generated_caption.is_none());
        }
        // same class shares the phrase prefix, different classes do not
        assert_eq!(
            ds.captions[0].caption.split(' ').next(),
            ds.captions[1].caption.split(' ').next()
        );
        assert_ne!(
            ds.captions[0].caption.split(' ').next(),
            ds.captions[12].caption.split(' ').next()
        );
    }

    #[test]
    fn config_validation_rejects_degenerate_setups() {
        assert!(gen_synthetic(&SynthConfig {
            num_classes: 1,
            ..small_cfg()
        })
        .is_err());
        assert!(gen_synthetic(&SynthConfig {
            per_class: 1,
            ..small_cfg()
        })
        .is_err());
        assert!(gen_synthetic(&SynthConfig {
            image_shape: (3, 4, 4),
            ..small_cfg()
        })
        .is_err());
        assert!(gen_synthetic(&SynthConfig {
            noise_sigma: -0.1,
            ..small_cfg()
        })
        .is_err());
    }

    #[test]
    fn corruption_swaps_the_requested_fraction() {
        let ds = gen_synthetic(&small_cfg()).unwrap();
        let out = corrupt_captions(&ds.captions, 0.5, 3).unwrap();
        assert_eq!(out.corrupted_ids.len(), 18);
        assert_eq!(out.records.len(), ds.captions.len());
        let by_id: HashSet<&str> = out.corrupted_ids.iter().map(String::as_str).collect();
        for (orig, got) in ds.captions.iter().zip(&out.records) {
            if by_id.contains(got.id.as_str()) {
                assert_eq!(got.generated_caption.as_deref(), Some(orig.caption.as_str()));
                assert_eq!(got.itm_original, Some(CORRUPT_ITM_SCORE));
                assert_eq!(got.itm_generated, Some(CLEAN_ITM_SCORE));
                assert_ne!(got.caption, orig.caption);
            } else {
                assert_eq!(got, orig);
            }
        }
    }

    #[test]
    fn corrupted_captions_come_from_another_class() {
        let ds = gen_synthetic(&small_cfg()).unwrap();
        let out = corrupt_captions(&ds.captions, 0.5, 3).unwrap();
        let by_id: HashSet<&str> = out.corrupted_ids.iter().map(String::as_str).collect();
        for got in &out.records {
            if !by_id.contains(got.id.as_str()) {
                continue;
            }
            let donor = ds
                .captions
                .iter()
                .find(|r| r.caption == got.caption)
                .expect("swapped caption must exist in the input");
            assert_ne!(donor.class_hint, got.class_hint);
        }
    }

    #[test]
    fn filtering_restores_clean_captions() {
        let ds = gen_synthetic(&small_cfg()).unwrap();
        let out = corrupt_captions(&ds.captions, 0.5, 3).unwrap();
        let (kept, report) = filter_captions(&out.records, &FilterPolicy::default()).unwrap();
        assert_eq!(report.kept_generated, out.corrupted_ids.len());
        assert_eq!(kept.len(), ds.captions.len());
        for (orig, got) in ds.captions.iter().zip(&kept) {
            assert_eq!(got.caption, orig.caption);
        }
    }

    #[test]
    fn corruption_is_deterministic_and_seed_sensitive() {
        let ds = gen_synthetic(&small_cfg()).unwrap();
        let a = corrupt_captions(&ds.captions, 0.5, 3).unwrap();
        let b = corrupt_captions(&ds.captions, 0.5, 3).unwrap();
        let c = corrupt_captions(&ds.captions, 0.5, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.corrupted_ids, c.corrupted_ids);
    }

    #[test]
    fn corruption_rejects_missing_hints_and_single_class() {
        let ds = gen_synthetic(&small_cfg()).unwrap();
        let mut no_hint = ds.captions.clone();
        no_hint[0].class_hint = None;
        assert!(corrupt_captions(&no_hint, 0.5, 3).is_err());
        let one_class: Vec<CaptionRecord> = ds.captions[..12].to_vec();
        assert!(corrupt_captions(&one_class, 0.5, 3).is_err());
        assert!(corrupt_captions(&ds.captions, 1.5, 3).is_err());
    }

    #[test]
    fn zero_fraction_is_a_no_op() {
        let ds = gen_synthetic(&small_cfg()).unwrap();
        let out = corrupt_captions(&ds.captions, 0.0, 3).unwrap();
        assert_eq!(out.records, ds.captions);
        assert!(out.corrupted_ids.is_empty());
    }
}
