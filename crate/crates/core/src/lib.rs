//! Pairwise ranking losses for dense object detection.
//!
//! The crate works directly on arrays of classification logits, sample roles,
//! localization scores and boxes. It provides:
//!
//! - [`distance`]: the piecewise step, sigmoid and cross-entropy-sigmoid
//!   distance functions applied to score differences.
//! - [`rankloss`]: the precision loss of AP loss, its error-driven update,
//!   the generalized pairwise error and the adaptive pairwise error (APE).
//! - [`assign`]: adaptive ranking pair selection, IoU-threshold assignment
//!   and GMM clustering of normalized ranking/localization scores.
//! - [`geometry`]: IoU, GIoU loss with closed-form gradients, and greedy NMS.
//! - [`eval`]: sort-based average precision, COCO-style AP and
//!   Pearson/Spearman/Kendall correlations.
//! - [`harness`]: synthetic detection instances, a toy gradient-descent
//!   trainer, gradient checking and experiment reports.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod assign;
pub mod distance;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod harness;
pub mod instance;
pub mod rankloss;

pub use assign::{arps, AdaptiveNegativeSets, AssignerOutcome, GmmModel};
pub use distance::DistanceFunction;
pub use error::{Error, Result};
pub use geometry::BBox;
pub use instance::{DetectionInstance, Role};
pub use rankloss::{BalanceConstant, GradientVector, LossConfig, LossOutput};

/// Library version, echoed into experiment summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
