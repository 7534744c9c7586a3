//! Regular ultrametric skeletons of finite metric-measure spaces.
//!
//! The pipeline builds a net-tree over a normalized space, refines it with
//! repeated annulus (Ramsey) splits into a binary hierarchy carrying a
//! sub-additive premeasure, trims that hierarchy to an additive measure and
//! reads off an ultrametric subset together with verifiers for the resulting
//! distortion and ball-growth bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod generators;
pub mod io;
pub mod metric;
pub mod net_tree;
pub mod oracle;
pub mod pipeline;
pub mod ramsey;
pub mod report;
pub mod skeleton;
pub mod tree_measure;

pub use error::{Error, Result};
pub use metric::{
    doubling_upper, mu_delta, validate_metric, BallKind, MeasuredMetric, MetricMeasureSpace, RegularityProfile,
};
pub use net_tree::{build_net_tree, verify_net_tree, NetTree, NetVertex};
pub use pipeline::{dvoretzky_extract, estimate_regularity, extract_beta_regular_um, um_skeleton, ExtractionReport};
pub use ramsey::{check_corollary, ramsey_decompose, RamseyResult};
pub use report::{ValidationReport, Violation};
pub use skeleton::{build_skeleton, verify_skeleton, SkeletonNode, SkeletonTree};
pub use tree_measure::{effective_delta, induce_measure, trim_balanced, SkeletonMeasure, TrimmedTree, UltrametricTree};
