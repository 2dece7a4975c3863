//! Self-supervised training: view construction, optimizer, schedule, loop.

pub mod adamw;
pub mod augment;
pub mod config;
pub mod run;
pub mod schedule;

pub use adamw::AdamW;
pub use augment::{augment_image, AugmentSpec};
pub use config::{PairSource, TrainConfig};
pub use run::{train, EpochRow, History, TrainOutcome, PROTOTYPES_PARAM};
pub use schedule::lr_at;
