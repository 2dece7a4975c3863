//! Episodic few-shot evaluation with nearest-centroid classification.
//!
//! Each episode samples `way` classes, takes `shot` support and `query` query
//! items per class, builds one centroid per class from normalized support
//! features, and classifies queries by cosine similarity to the centroids.
//! The headline number is the mean episode accuracy with its standard error.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::util::mix_seed;

const FEWSHOT_SALT: u64 = 0x6f5e;

/// Episode layout for [`fewshot_eval`].
#[derive(Debug, Clone)]
pub struct FewshotConfig {
    /// Classes per episode.
    pub way: usize,
    /// Support items per class.
    pub shot: usize,
    /// Query items per class.
    pub query: usize,
    /// Number of episodes to average over.
    pub episodes: usize,
    pub seed: u64,
}

impl Default for FewshotConfig {
    fn default() -> Self {
        FewshotConfig { way: 5, shot: 5, query: 15, episodes: 200, seed: 0 }
    }
}

impl FewshotConfig {
    fn validate(&self) -> Result<()> {
        if self.way < 2 {
            return Err(Error::Config(format!("way must be >= 2, got {}", self.way)));
        }
        if self.shot == 0 || self.query == 0 {
            return Err(Error::Config("shot and query must be >= 1".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Aggregate accuracy over all episodes.
#[derive(Debug, Clone)]
pub struct FewshotResult {
    /// Mean of per-episode accuracies.
    pub mean_accuracy: f64,
    /// Standard error of the mean, sample standard deviation over episodes
    /// (n-1 denominator) divided by sqrt(episodes). Zero for one episode.
    pub stderr: f64,
    /// Accuracy of each episode in order.
    pub episode_accuracies: Vec<f64>,
    /// Class indices that had fewer than `shot + query` items and were never
    /// sampled.
    pub excluded_classes: Vec<usize>,
    /// Number of classes eligible for sampling.
    pub eligible_classes: usize,
}

fn normalized_f64(row: &[f32]) -> Vec<f64> {
    let mut out: Vec<f64> = row.iter().map(|v| *v as f64).collect();
    let mut n2 = 0.0;
    for v in &out {
        n2 += v * v;
    }
    let n = n2.sqrt();
    // Zero rows stay zero and score cosine 0 against every centroid.
    if n > 0.0 {
        for v in &mut out {
            *v /= n;
        }
    }
    out
}

/// Runs nearest-centroid episodes over frozen features.
///
/// `labels[i]` is the class index of feature row `i`. Classes with fewer than
/// `shot + query` items are excluded up front; at least `way` classes must
/// remain. Sampling is driven by a ChaCha8 stream derived from `cfg.seed`, so
/// identical inputs give identical episodes.
pub fn fewshot_eval(
    features: &Tensor<f32>,
    labels: &[usize],
    cfg: &FewshotConfig,
) -> Result<FewshotResult> {
    cfg.validate()?;
    if features.shape().len() != 2 {
        return Err(Error::Validation(format!(
            "features must be 2-D, got shape {:?}",
            features.shape()
        )));
    }
    let n = features.shape()[0];
    let dim = features.shape()[1];
    if labels.len() != n {
        return Err(Error::Validation(format!("{n} feature rows but {} labels", labels.len())));
    }
    if !features.all_finite() {
        return Err(Error::Validation("features contain non-finite values".into()));
    }
    let num_classes = match labels.iter().max() {
        Some(&m) => m + 1,
        None => return Err(Error::Validation("features must be non-empty".into())),
    };
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let need = cfg.shot + cfg.query;
    let mut eligible: Vec<usize> = Vec::new();
    let mut excluded: Vec<usize> = Vec::new();
    for (k, members) in by_class.iter().enumerate() {
        if members.len() >= need {
            eligible.push(k);
        } else {
            excluded.push(k);
        }
    }
    if eligible.len() < cfg.way {
        return Err(Error::Validation(format!(
            "need {} classes with at least {need} items each, only {} qualify",
            cfg.way,
            eligible.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, FEWSHOT_SALT]));
    let mut episode_accuracies = Vec::with_capacity(cfg.episodes);
    for _ in 0..cfg.episodes {
        let picked = sample(&mut rng, eligible.len(), cfg.way);
        let mut classes: Vec<usize> = picked.iter().map(|i| eligible[i]).collect();
        // Fixed class order inside the episode so argmax ties resolve to the
        // lowest class index regardless of sampling order.
        classes.sort_unstable();
        let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(cfg.way);
        let mut queries: Vec<(usize, Vec<f64>)> = Vec::new();
        for (slot, &k) in classes.iter().enumerate() {
            let members = &by_class[k];
            let chosen = sample(&mut rng, members.len(), need);
            let mut centroid = vec![0.0f64; dim];
            for (pos, idx) in chosen.iter().enumerate() {
                let row = normalized_f64(features.row(members[idx]));
                if pos < cfg.shot {
                    for (c, v) in centroid.iter_mut().zip(row.iter()) {
                        *c += v;
                    }
                } else {
                    queries.push((slot, row));
                }
            }
            let mut n2 = 0.0;
            for v in &centroid {
                n2 += v * v;
            }
            let norm = n2.sqrt();
            if norm > 0.0 {
                for v in &mut centroid {
                    *v /= norm;
                }
            }
            centroids.push(centroid);
        }
        let mut correct = 0usize;
        for (truth, q) in &queries {
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (slot, centroid) in centroids.iter().enumerate() {
                let mut s = 0.0;
                for (c, v) in centroid.iter().zip(q.iter()) {
                    s += c * v;
                }
                if s > best_score {
                    best_score = s;
                    best = slot;
                }
            }
            if best == *truth {
                correct += 1;
            }
        }
        episode_accuracies.push(correct as f64 / queries.len() as f64);
    }

    let m = episode_accuracies.len() as f64;
    let mean = episode_accuracies.iter().sum::<f64>() / m;
    let stderr = if episode_accuracies.len() > 1 {
        let var = episode_accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    Ok(FewshotResult {
        mean_accuracy: mean,
        stderr,
        episode_accuracies,
        excluded_classes: excluded,
        eligible_classes: eligible.len(),
    })
}
