//! Mondrian forests: random forests that learn one point at a time.
//!
//! Each tree is a restriction of a Mondrian process to the training data.
//! Extending a tree with a new point samples from the conditional of the
//! process given the current tree, so a tree grown online has the same
//! distribution as one sampled in batch on the same points.
//!
//! ```
//! use mondrian_forest::{Dataset, ForestConfig, MondrianForest};
//!
//! let data = Dataset::new(
//!     vec![0.1, 0.2, 0.8, 0.9, 0.15, 0.1, 0.85, 0.7],
//!     vec![0, 1, 0, 1],
//!     2,
//!     2,
//! )?;
//! let mut forest = MondrianForest::new(ForestConfig { num_trees: 10, ..ForestConfig::new(2, 2) })?;
//! forest.partial_fit_dataset(&data)?;
//! let p = forest.predict_proba(&[0.12, 0.15])?;
//! assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
//! # Ok::<(), mondrian_forest::Error>(())
//! ```
//!
//! The guide in `book/` walks through the model; its code listings are
//! compiled as doctests of this crate.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod forest;
pub mod points;
pub mod posterior;
pub mod predict;
pub mod rng;
pub mod snapshot;
pub mod stats;
pub mod tree;

pub use data::{Dataset, Format, LabelMap, LoadOptions, Scaling};
pub use error::{Error, Result};
pub use forest::{ForestConfig, MondrianForest};
pub use points::{PointId, PointStore};
pub use posterior::{PosteriorCounts, PosteriorParams};
pub use predict::{predict_tree, predict_tree_mc_oracle, PredictiveDistribution};
pub use rng::{RngStream, SplitDraws};
pub use tree::{MondrianTree, NodeId, TreeSettings, TreeStats};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/online.md")]
    mod online {}
    #[doc = include_str!("../../../book/src/posterior.md")]
    mod posterior {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/forests.md")]
    mod forests {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
