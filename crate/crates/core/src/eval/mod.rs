//! Feature-quality evaluations: a linear probe on frozen features,
//! nearest-centroid few-shot episodes, and mask-based scoring of saliency
//! maps, plus flat key=value reports and aligned-column tables.

pub mod auc;
pub mod fewshot;
pub mod probe;
pub mod report;

pub use auc::{auc_scores, saliency_auc, saliency_auc_per_image, AucResult, PerImageAuc};
pub use fewshot::{fewshot_eval, FewshotConfig, FewshotResult};
pub use probe::{linear_probe, linear_probe_from, ProbeConfig, ProbeResult};
pub use report::{merge_reports, MetricsReport, MetricsTable, METRIC_PREFIX, TASK_KEY};
