//! Synthetic self-training harness.
//!
//! A centroid-based stand-in for deep self-training: Gaussian class clusters
//! with a label-shifted target, an EM-style pseudo-labelling loop with and
//! without rectification, teacher blending, and the evaluation metrics.

mod adapt;
mod domain;
mod metrics;

pub use adapt::{
    dine_like_teacher, noise_draws, run_arm, shot_like_adapt, AdaptConfig, AdaptTrace, Arm,
    IterationRecord, TeacherComparison,
};
pub use domain::{generate_shifted_domains, largest_remainder_counts, Domain, SyntheticDomainSpec};
pub use metrics::{
    accuracy, kl_to_truth, label_distribution, per_class_avg_accuracy, present_class_avg_accuracy,
    teacher_blend,
};
