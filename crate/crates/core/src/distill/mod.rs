//! Soft-target distillation: ensemble vote fusion, Bayesian updates with
//! SVM and pixel-classifier evidence, and student training.

mod fusion;
mod metrics;
mod soft;
mod student;

pub use fusion::{bayes_fuse, clamp_probability, fuse_ensemble, pixel_aggregate_label, ModelStats, VoteVector, EPSILON, PIXEL_AGGREGATE_THRESHOLD};
pub use metrics::{majority_vote, BinaryMetrics};
pub use soft::{build_soft_targets, heldout_split, measure_model_stats, read_soft_targets, write_soft_targets, DistillModels, SoftTarget, HELDOUT_FRACTION};
pub use student::{train_student, StudentConfig};
