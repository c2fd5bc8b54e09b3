//! Discovery of segmentation styles in a labelled image cohort.
//!
//! A cohort is split into subgroups by minimizing a cross-subgroup
//! generalization score with a gene-pool optimal mixing genetic algorithm.
//! Style-specific models trained on the discovered subgroups are then
//! compared against a single model trained on the whole mixture.

pub mod distance;
pub mod error;
pub mod harness;
pub mod io;
pub mod learner;
pub mod mask;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub mod sim;

pub use error::{Error, Result};
pub use learner::{CohortTrainer, Learner, LearnerSpec, MorphLearner, StyleParams};
pub use mask::{BoundarySet, GrayImage, Mask, Scan, Slice, Spacing, VoxelSpacing};
pub use metrics::{MetricConfig, ScorePair, SurfaceCounts};
pub use objective::{BaselineScores, EvaluationRecord, Evaluator, ObjectiveKind, Partition};
pub use optimizer::{
    misclassification, optimize_partition, partition_misclassification, recursive_partition,
    GaConfig, OptimizationResult, PartitionTreeNode, RecursiveConfig, SurrogateConfig,
};
pub use sim::{Layout, PhantomConfig, StyleOp, StyleSpec, StyledCohort};
