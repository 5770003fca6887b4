//! Clustering toolkit for sparse neuron-activation patterns.
//!
//! * [`pattern`]: dense and bit-packed activation matrices, magnitude thresholding.
//! * [`awc`]: activation-aware clustering with capacity-balanced assignment.
//! * [`baselines`]: BMF-style alternating binary clustering and
//!   binary-to-real-and-back k-means.
//! * [`metrics`]: clustering precision, element-wise error and reports.
//! * [`costmodel`]: neuron-level vs cluster-level prediction cost.
//! * [`ingest`]: APCB/APCF/APCC file formats and the planted-prototype generator.

pub mod awc;
pub mod baselines;
pub mod codebook;
pub mod costmodel;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod pattern;

pub use awc::{cluster_awc, ClusteringConfig};
pub use baselines::{cluster_bmf, cluster_brb_kmeans, BaselineConfig};
pub use codebook::{Assignment, Centroid, CentroidSet};
pub use costmodel::CostModelParams;
pub use error::{ApcError, Result};
pub use metrics::MetricsReport;
pub use pattern::{BinarySupportMatrix, PatternMatrix};
