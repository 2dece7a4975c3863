//! Contrastive training objectives.
//!
//! All four objectives consume L2-normalized projections of two views and
//! return a scalar loss plus explicit gradients for everything they treat
//! as trainable. Stop-gradients are literal: the returned gradient for a
//! detached input is an exact-zero tensor, not a small one.
//!
//! Losses are computed internally in `f64` (with max-subtraction in every
//! softmax and log-sum-exp) and cast back to the parameter element type.

pub mod nnclr;
pub mod ntxent;
pub mod simsiam;
pub mod swav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nnclr::{nnclr_loss, NnclrLoss, SupportQueue};
pub use ntxent::{ntxent_loss, PairLoss};
pub use simsiam::{simsiam_loss, SimsiamLoss};
pub use swav::{sinkhorn, swav_loss, swav_loss_with_codes, SinkhornResult, SwavLoss};

/// Tolerance for the unit-norm precondition on projection rows.
pub const UNIT_NORM_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    NtXent,
    SimSiam,
    Nnclr,
    Swav,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    /// Softmax temperature for the InfoNCE-style objectives.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Support queue capacity for the neighbor-swap objective.
    #[serde(default = "default_queue_size")]
    pub queue_size: usize,
    /// Number of prototype vectors for the clustering objective.
    #[serde(default = "default_num_prototypes")]
    pub num_prototypes: usize,
    /// Entropy regularization of the balanced assignment.
    #[serde(default = "default_sinkhorn_eps")]
    pub sinkhorn_eps: f64,
    /// Balancing rounds per assignment.
    #[serde(default = "default_sinkhorn_iters")]
    pub sinkhorn_iters: usize,
}

fn default_temperature() -> f64 {
    0.1
}
fn default_queue_size() -> usize {
    1024
}
fn default_num_prototypes() -> usize {
    30
}
fn default_sinkhorn_eps() -> f64 {
    0.05
}
fn default_sinkhorn_iters() -> usize {
    3
}

impl ObjectiveConfig {
    #[must_use]
    pub fn new(kind: ObjectiveKind) -> Self {
        ObjectiveConfig {
            kind,
            temperature: default_temperature(),
            queue_size: default_queue_size(),
            num_prototypes: default_num_prototypes(),
            sinkhorn_eps: default_sinkhorn_eps(),
            sinkhorn_iters: default_sinkhorn_iters(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.queue_size == 0 {
            return Err(Error::Config("queue_size must be positive".into()));
        }
        if self.num_prototypes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 prototypes, got {}",
                self.num_prototypes
            )));
        }
        if !(self.sinkhorn_eps.is_finite() && self.sinkhorn_eps > 0.0) {
            return Err(Error::Config(format!(
                "sinkhorn_eps must be positive, got {}",
                self.sinkhorn_eps
            )));
        }
        if self.sinkhorn_iters == 0 {
            return Err(Error::Config("sinkhorn_iters must be positive".into()));
        }
        Ok(())
    }
}
