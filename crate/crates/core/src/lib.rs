//! Caption-guided contrastive pretraining at desk scale.
//!
//! The crate is organized around a small pipeline: synthesize or load a
//! captioned image dataset, embed captions into a toy text space, mine
//! nearest-neighbor pairs in that space, optionally swap noisy captions for
//! generated ones, pretrain a small convolutional encoder with one of four
//! contrastive objectives, and evaluate the learned features with a linear
//! probe, few-shot episodes, and saliency localization scores.
//!
//! Everything is deterministic given a seed: RNG streams are keyed
//! explicitly, reductions run in fixed orders, and file formats carry no
//! timestamps, so identical invocations produce byte-identical artifacts.

pub mod data;
pub mod error;
pub mod eval;
pub mod filter;
pub mod nn;
pub mod objectives;
pub mod pairs;
pub mod train;
pub mod util;

pub use error::{Error, Result};
