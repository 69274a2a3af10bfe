//! Evaluation: tube IoU, the accuracy metrics with their baselines, and the
//! mutual-information bound validator.

mod iou;
mod metrics;
mod mi;

pub use iou::tube_iou;
pub use metrics::{
    best_matching_attribute, concept_accuracy, concept_hit, evaluate, negative_class_accuracy, negative_rank,
    positive_drop_ratio, random_tube_like, ConceptOutcome, EvalConfig, MaskOutcome, MetricEntry, MetricReport,
    QueryRecord,
};
pub use mi::{mi_bound_check, random_mi_instance, MIInstance, MIReport};
