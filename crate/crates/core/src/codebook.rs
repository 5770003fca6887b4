//! Centroids, codebooks and cluster assignments shared by every algorithm.

use crate::error::{ApcError, Result};
use crate::pattern::{and_count, words_for};

/// A representative activation pattern: the selected feature indices and the
/// intensity retained for each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    dim: usize,
    active: Vec<usize>,
    intensities: Vec<f32>,
    bits: Vec<u64>,
}

impl Centroid {
    /// `active` must be strictly ascending and below `dim`; `intensities`
    /// must be finite, positive and parallel to `active`.
    pub fn new(dim: usize, active: Vec<usize>, intensities: Vec<f32>) -> Result<Self> {
        if active.len() != intensities.len() {
            return Err(ApcError::InvalidInput(format!(
                "{} active features but {} intensities",
                active.len(),
                intensities.len()
            )));
        }
        if active.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ApcError::InvalidInput(
                "centroid features must be strictly ascending".into(),
            ));
        }
        if let Some(&j) = active.last().filter(|&&j| j >= dim) {
            return Err(ApcError::InvalidInput(format!(
                "centroid feature {j} out of range for dimension {dim}"
            )));
        }
        if let Some(v) = intensities.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(ApcError::InvalidInput(format!(
                "centroid intensity {v} must be finite and positive"
            )));
        }
        let mut bits = vec![0u64; words_for(dim)];
        for &j in &active {
            bits[j / 64] |= 1 << (j % 64);
        }
        Ok(Self {
            dim,
            active,
            intensities,
            bits,
        })
    }

    /// Binary centroid with unit intensities.
    pub fn from_support(dim: usize, active: Vec<usize>) -> Result<Self> {
        let ones = vec![1.0; active.len()];
        Self::new(dim, active, ones)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn active_set(&self) -> &[usize] {
        &self.active
    }

    pub fn intensities(&self) -> &[f32] {
        &self.intensities
    }

    /// Packed binary state, `words_for(dim)` words.
    #[inline]
    pub fn bits(&self) -> &[u64] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Number of features shared with a packed row.
    #[inline]
    pub fn overlap(&self, row_bits: &[u64]) -> u64 {
        and_count(&self.bits, row_bits)
    }
}

/// `k` centroids over a common dimension.
///
/// `density_p` is the fraction of features each centroid keeps active, or
/// `None` for algorithms that do not constrain it (the binary baselines).
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    dim: usize,
    density_p: Option<f64>,
    centroids: Vec<Centroid>,
}

impl CentroidSet {
    pub fn new(dim: usize, density_p: Option<f64>, centroids: Vec<Centroid>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(ApcError::InvalidInput(
                "codebook needs at least one centroid".into(),
            ));
        }
        if dim == 0 {
            return Err(ApcError::InvalidInput(
                "codebook dimension must be positive".into(),
            ));
        }
        if let Some(p) = density_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(ApcError::InvalidConfig(format!(
                    "density_p must lie in (0, 1], got {p}"
                )));
            }
        }
        if let Some(c) = centroids.iter().find(|c| c.dim != dim) {
            return Err(ApcError::DimensionMismatch {
                expected: dim,
                actual: c.dim,
            });
        }
        Ok(Self {
            dim,
            density_p,
            centroids,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn density_p(&self) -> Option<f64> {
        self.density_p
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    pub fn centroid(&self, c: usize) -> &Centroid {
        &self.centroids[c]
    }

    pub fn into_centroids(self) -> Vec<Centroid> {
        self.centroids
    }
}

/// Cluster index per row together with the per-cluster member counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    cluster_of: Vec<usize>,
    sizes: Vec<usize>,
}

impl Assignment {
    /// Builds an assignment for `k` clusters, checking every index.
    pub fn new(cluster_of: Vec<usize>, k: usize) -> Result<Self> {
        let mut sizes = vec![0usize; k];
        for (row, &c) in cluster_of.iter().enumerate() {
            if c >= k {
                return Err(ApcError::Assignment(format!(
                    "row {row} assigned to cluster {c}, but k = {k}"
                )));
            }
            sizes[c] += 1;
        }
        Ok(Self { cluster_of, sizes })
    }

    pub fn cluster_of(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_rows(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// Row indices per cluster, each list ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (row, &c) in self.cluster_of.iter().enumerate() {
            out[c].push(row);
        }
        out
    }

    /// Rows whose cluster differs from `other` (all rows when lengths differ).
    pub fn count_changed(&self, other: &Assignment) -> usize {
        if other.cluster_of.len() != self.cluster_of.len() {
            return self.cluster_of.len();
        }
        self.cluster_of
            .iter()
            .zip(&other.cluster_of)
            .filter(|(a, b)| a != b)
            .count()
    }
}
