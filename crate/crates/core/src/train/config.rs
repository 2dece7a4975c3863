//! Training-run configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::encoder::EncoderSpec;
use crate::objectives::{ObjectiveConfig, ObjectiveKind};
use crate::train::augment::AugmentSpec;

/// Where positive pairs come from: two augmentations of the same image, or
/// an image and its caption-space nearest neighbor from a pair manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSource {
    Augment,
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: ObjectiveConfig,
    pub pair_source: PairSource,
    /// Peak learning rate after warmup. Zero is legal and trains nothing.
    #[serde(default = "default_lr_peak")]
    pub lr_peak: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Linear warmup steps. Unset means 5% of the total step count.
    #[serde(default)]
    pub warmup_steps: Option<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Fraction of images held out for the per-epoch validation probe.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Return the checkpoint of the best validation epoch instead of the
    /// final one.
    #[serde(default = "default_early_stop")]
    pub early_stop: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub augment: AugmentSpec,
}

fn default_lr_peak() -> f64 {
    1e-3
}
fn default_weight_decay() -> f64 {
    1e-2
}
fn default_epochs() -> usize {
    25
}
fn default_batch_size() -> usize {
    64
}
fn default_val_fraction() -> f64 {
    0.2
}
fn default_early_stop() -> bool {
    true
}

impl TrainConfig {
    /// Defaults around a given objective and pair source.
    #[must_use]
    pub fn new(kind: ObjectiveKind, pair_source: PairSource) -> Self {
        TrainConfig {
            objective: ObjectiveConfig::new(kind),
            pair_source,
            lr_peak: default_lr_peak(),
            weight_decay: default_weight_decay(),
            warmup_steps: None,
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            val_fraction: default_val_fraction(),
            early_stop: default_early_stop(),
            seed: 0,
            encoder: EncoderSpec::default(),
            augment: AugmentSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        self.augment.validate()?;
        if !self.lr_peak.is_finite() || self.lr_peak < 0.0 {
            return Err(Error::Config(format!(
                "lr_peak must be finite and >= 0, got {}",
                self.lr_peak
            )));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if !self.val_fraction.is_finite()
            || self.val_fraction <= 0.0
            || self.val_fraction >= 1.0
        {
            return Err(Error::Config(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.objective.kind == ObjectiveKind::SimSiam && self.encoder.pred_dims.is_none() {
            return Err(Error::Config(
                "the stop-gradient objective needs a predictor head; set encoder.pred_dims"
                    .into(),
            ));
        }
        if self.objective.kind == ObjectiveKind::Nnclr
            && self.objective.queue_size < self.batch_size
        {
            return Err(Error::Config(format!(
                "queue_size ({}) must be at least batch_size ({})",
                self.objective.queue_size, self.batch_size
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::new(ObjectiveKind::NtXent, PairSource::Augment)
            .validate()
            .unwrap();
    }

    #[test]
    fn stop_gradient_objective_requires_a_predictor() {
        let cfg = TrainConfig::new(ObjectiveKind::SimSiam, PairSource::Augment);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut with_pred = TrainConfig::new(ObjectiveKind::SimSiam, PairSource::Augment);
        with_pred.encoder.pred_dims = Some(vec![8]);
        with_pred.validate().unwrap();
    }

    #[test]
    fn queue_must_hold_a_full_batch() {
        let mut cfg = TrainConfig::new(ObjectiveKind::Nnclr, PairSource::Augment);
        cfg.objective.queue_size = cfg.batch_size - 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_peak_rate_is_legal() {
        let mut cfg = TrainConfig::new(ObjectiveKind::NtXent, PairSource::Augment);
        cfg.lr_peak = 0.0;
        cfg.validate().unwrap();
    }

    #[test]
    fn config_json_round_trips_with_defaults_filled() {
        let json = r#"{"objective":{"kind":"ntxent"},"pair_source":"manifest"}"#;
        let cfg: TrainConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.pair_source, PairSource::Manifest);
        assert_eq!(cfg.lr_peak, 1e-3);
        assert_eq!(cfg.weight_decay, 1e-2);
        assert_eq!(cfg.epochs, 25);
        assert_eq!(cfg.batch_size, 64);
        assert!(cfg.warmup_steps.is_none());
        assert!(cfg.early_stop);
        cfg.validate().unwrap();
        let back: TrainConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
