//! Caption filtering: keep whichever caption scores higher under an
//! image-text match model, optionally dropping records whose best score is
//! still too low.

use serde::{Deserialize, Serialize};

use crate::data::types::{validate_records, CaptionRecord, CaptionSource};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterPolicy {
    /// Records whose retained caption scores below this are dropped
    /// entirely (and counted in the report). None keeps everything.
    pub min_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub kept_original: usize,
    pub kept_generated: usize,
    pub dropped: usize,
    pub min_score: Option<f64>,
}

impl FilterReport {
    /// Flat `key=value` lines, one per field.
    #[must_use]
    pub fn to_kv(&self) -> String {
        let min_score = match self.min_score {
            Some(v) => v.to_string(),
            None => "none".into(),
        };
        format!(
            "total={}\nkept_original={}\nkept_generated={}\ndropped={}\nmin_score={}\n",
            self.total, self.kept_original, self.kept_generated, self.dropped, min_score
        )
    }
}

/// Chooses between the original and generated caption of every record.
///
/// The generated caption wins only when its score is strictly higher; ties
/// keep the original. Every input record must carry `itm_original`, and
/// `itm_generated` whenever a generated caption is present. Output records
/// hold the winning caption in `caption`, its score in `itm_original`, the
/// winner in `source`, and no generated fields, so filtering is
/// idempotent: a second pass keeps every record unchanged.
pub fn filter_captions(
    records: &[CaptionRecord],
    policy: &FilterPolicy,
) -> Result<(Vec<CaptionRecord>, FilterReport)> {
    validate_records(records)?;
    if let Some(ms) = policy.min_score {
        if !(0.0..=1.0).contains(&ms) {
            return Err(Error::Config(format!(
                "min_score {ms} is outside [0, 1]"
            )));
        }
    }
    let mut out = Vec::with_capacity(records.len());
    let mut report = FilterReport {
        total: records.len(),
        kept_original: 0,
        kept_generated: 0,
        dropped: 0,
        min_score: policy.min_score,
    };
    for r in records {
        let orig_score = r.itm_original.ok_or_else(|| {
            Error::Validation(format!("id {:?}: missing itm_original", r.id))
        })?;
        let (caption, score, source) = match (&r.generated_caption, r.itm_generated) {
            (Some(gen), Some(gen_score)) if gen_score > orig_score => {
                (gen.clone(), gen_score, CaptionSource::Generated)
            }
            (Some(_), Some(_)) => (r.caption.clone(), orig_score, CaptionSource::Original),
            // nothing to choose between; keep the provenance a previous
            // filtering pass recorded, which makes re-filtering a no-op
            (None, None) => (
                r.caption.clone(),
                orig_score,
                r.source.unwrap_or(CaptionSource::Original),
            ),
            (Some(_), None) => {
                return Err(Error::Validation(format!(
                    "id {:?}: generated_caption without itm_generated",
                    r.id
                )))
            }
            // itm_generated without a caption is rejected by validation
            (None, Some(_)) => unreachable!(),
        };
        if let Some(ms) = policy.min_score {
            if score < ms {
                report.dropped += 1;
                continue;
            }
        }
        match source {
            CaptionSource::Original => report.kept_original += 1,
            CaptionSource::Generated => report.kept_generated += 1,
        }
        out.push(CaptionRecord {
            id: r.id.clone(),
            caption,
            generated_caption: None,
            itm_original: Some(score),
            itm_generated: None,
            class_hint: r.class_hint.clone(),
            source: Some(source),
        });
    }
    Ok((out, report))
}

/// Picks the best caption from scored candidates: highest score wins,
/// earliest candidate on ties.
pub fn best_of_k(candidates: &[(String, f64)]) -> Result<(String, f64)> {
    if candidates.is_empty() {
        return Err(Error::Validation("no caption candidates".into()));
    }
    let mut best = 0;
    for (i, (_, score)) in candidates.iter().enumerate() {
        if !(0.0..=1.0).contains(score) || !score.is_finite() {
            return Err(Error::Validation(format!(
                "candidate {i} score {score} is outside [0, 1]"
            )));
        }
        if *score > candidates[best].1 {
            best = i;
        }
    }
    Ok(candidates[best].clone())
}
