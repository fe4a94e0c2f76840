//! Multi-label learning by recursive partitioning of the label space.
//!
//! The label set of a multi-label task is clustered into a tree of small
//! meta-label classification problems: labels are represented by their
//! occurrence vectors over the training instances, grouped with (balanced)
//! k-means, and each node of the resulting tree trains one linear model per
//! meta-label. Prediction walks the tree top-down, either as hard
//! bipartitions or as a score-propagating ranking with optional pruning.
//!
//! The crate also ships the surrounding toolkit: a sparse multi-label
//! dataset loader, micro/macro F1 evaluation with frequency buckets, a
//! benchmark harness, and synthetic corpus generators.

pub mod benchmark;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod inference;
pub mod learner;
pub mod model;
pub mod synth;
pub(crate) mod timing;

pub use crate::error::Error;
pub use crate::error::Result;
