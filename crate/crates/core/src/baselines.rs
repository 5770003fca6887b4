//! Standard binary-clustering baselines.
//!
//! * [`cluster_bmf`]: binary matrix factorization `A ≈ W·H` with a one-hot
//!   assignment factor `W`. Alternates Hamming-nearest assignment with
//!   per-bit majority vote, i.e. k-medians under Hamming distance.
//! * [`cluster_brb_kmeans`]: binary-to-real-and-back k-means. Bits become
//!   0.0/1.0 reals, Lloyd iterations run under squared Euclidean distance,
//!   and the final means are thresholded at 0.5 back to bits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::awc::sample_rows;
use crate::codebook::{Assignment, Centroid, CentroidSet};
use crate::error::{ApcError, Result};
use crate::metrics::{build_report_binary, MetricsReport};
use crate::pattern::{xor_count, BinarySupportMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmptyClusterPolicy {
    /// Replace the centroid with the row farthest from its own centroid.
    ReseedFarthest,
    /// Leave the previous centroid in place.
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub empty_cluster_policy: EmptyClusterPolicy,
}

impl BaselineConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters: 50,
            seed: 0,
            empty_cluster_policy: EmptyClusterPolicy::ReseedFarthest,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_empty_cluster_policy(mut self, policy: EmptyClusterPolicy) -> Self {
        self.empty_cluster_policy = policy;
        self
    }

    fn validate(&self, n_rows: usize) -> Result<()> {
        if self.k == 0 || self.k > n_rows {
            return Err(ApcError::InvalidConfig(format!(
                "k must satisfy 1 <= k <= N (N = {n_rows}), got k = {}",
                self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub codebook: CentroidSet,
    pub assignment: Assignment,
    pub report: MetricsReport,
    pub iterations: usize,
    /// Objective after each update step: total Hamming distance for BMF,
    /// real-space within-cluster sum of squares for BRB-KMeans.
    pub objective_trace: Vec<f64>,
}

fn hamming_nearest(bits: &[u64], centroids: &[Vec<u64>]) -> (usize, u64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, cb)| (c, xor_count(bits, cb)))
        .min_by_key(|&(c, d)| (d, c))
        .expect("at least one centroid")
}

fn hamming_assign(data: &BinarySupportMatrix, centroids: &[Vec<u64>]) -> Vec<usize> {
    (0..data.n_rows())
        .into_par_iter()
        .map(|i| hamming_nearest(data.row_words(i), centroids).0)
        .collect()
}

fn members_of(cluster_of: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); k];
    for (row, &c) in cluster_of.iter().enumerate() {
        members[c].push(row);
    }
    members
}

/// Per-column set-bit counts over `rows`.
fn column_counts(data: &BinarySupportMatrix, rows: &[usize]) -> Vec<u32> {
    let mut counts = vec![0u32; data.n_cols()];
    for &row in rows {
        for j in data.row_support(row) {
            counts[j] += 1;
        }
    }
    counts
}

/// Majority vote per bit: set iff strictly more than half the members have
/// it set; an exact tie clears the bit.
pub fn majority_centroid(data: &BinarySupportMatrix, members: &[usize]) -> Vec<u64> {
    let counts = column_counts(data, members);
    let mut bits = vec![0u64; data.words_per_row()];
    for (j, &n) in counts.iter().enumerate() {
        if 2 * n as usize > members.len() {
            bits[j / 64] |= 1 << (j % 64);
        }
    }
    bits
}

/// Thresholds a real centroid at 0.5 (inclusive) back to bits.
pub fn binarize_centroid(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= 0.5)
        .map(|(j, _)| j)
        .collect()
}

/// `count` rows with the largest `dist`, ties to the lower row index.
fn farthest_rows(dist: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

fn words_to_support(words: &[u64]) -> Vec<usize> {
    let mut out = Vec::new();
    for (w, &word) in words.iter().enumerate() {
        let mut word = word;
        while word != 0 {
            out.push(w * 64 + word.trailing_zeros() as usize);
            word &= word - 1;
        }
    }
    out
}

fn binary_codebook(dim: usize, centroids: &[Vec<u64>]) -> Result<CentroidSet> {
    let cs = centroids
        .iter()
        .map(|w| Centroid::from_support(dim, words_to_support(w)))
        .collect::<Result<Vec<_>>>()?;
    CentroidSet::new(dim, None, cs)
}

/// BMF-style alternating binary clustering.
pub fn cluster_bmf(data: &BinarySupportMatrix, config: &BaselineConfig) -> Result<BaselineOutcome> {
    config.validate(data.n_rows())?;
    let k = config.k;
    let mut centroids: Vec<Vec<u64>> = sample_rows(data.n_rows(), k, config.seed)
        .into_iter()
        .map(|r| data.row_words(r).to_vec())
        .collect();
    let mut cluster_of: Option<Vec<usize>> = None;
    let mut objective_trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..config.max_iters.max(1) {
        let next = hamming_assign(data, &centroids);
        if cluster_of.as_ref() == Some(&next) {
            break;
        }
        iterations += 1;
        let members = members_of(&next, k);
        let updated: Vec<Option<Vec<u64>>> = members
            .par_iter()
            .map(|m| (!m.is_empty()).then(|| majority_centroid(data, m)))
            .collect();
        let empty: Vec<usize> = (0..k).filter(|&c| updated[c].is_none()).collect();
        let reseed = if !empty.is_empty()
            && config.empty_cluster_policy == EmptyClusterPolicy::ReseedFarthest
        {
            let dist: Vec<f64> = (0..data.n_rows())
                .into_par_iter()
                .map(|i| xor_count(data.row_words(i), &centroids[next[i]]) as f64)
                .collect();
            farthest_rows(&dist, empty.len())
        } else {
            Vec::new()
        };
        for (c, u) in updated.into_iter().enumerate() {
            if let Some(bits) = u {
                centroids[c] = bits;
            }
        }
        for (&c, &row) in empty.iter().zip(&reseed) {
            centroids[c] = data.row_words(row).to_vec();
        }
        let objective: u64 = (0..data.n_rows())
            .into_par_iter()
            .map(|i| xor_count(data.row_words(i), &centroids[next[i]]))
            .sum();
        objective_trace.push(objective as f64);
        cluster_of = Some(next);
    }

    let codebook = binary_codebook(data.n_cols(), &centroids)?;
    let assignment = Assignment::new(cluster_of.expect("at least one iteration"), k)?;
    let report = build_report_binary(data, &codebook, &assignment)?;
    Ok(BaselineOutcome {
        codebook,
        assignment,
        report,
        iterations,
        objective_trace,
    })
}

fn squared_norm(c: &[f64]) -> f64 {
    c.iter().map(|v| v * v).sum()
}

/// `||x - c||^2` for a binary row `x` given `||c||^2`.
fn binary_sq_distance(support: &[usize], centroid: &[f64], norm: f64) -> f64 {
    norm + support
        .iter()
        .map(|&j| 1.0 - 2.0 * centroid[j])
        .sum::<f64>()
}

/// Binary-to-real-and-back k-means.
pub fn cluster_brb_kmeans(
    data: &BinarySupportMatrix,
    config: &BaselineConfig,
) -> Result<BaselineOutcome> {
    config.validate(data.n_rows())?;
    let (k, dim) = (config.k, data.n_cols());
    let supports: Vec<Vec<usize>> = (0..data.n_rows()).map(|i| data.row_support(i)).collect();
    let mut centroids: Vec<Vec<f64>> = sample_rows(data.n_rows(), k, config.seed)
        .into_iter()
        .map(|r| {
            let mut c = vec![0.0; dim];
            for &j in &supports[r] {
                c[j] = 1.0;
            }
            c
        })
        .collect();
    let mut cluster_of: Option<Vec<usize>> = None;
    let mut objective_trace = Vec::new();
    let mut iterations = 0;

    let nearest = |centroids: &[Vec<f64>]| -> Vec<(usize, f64)> {
        let norms: Vec<f64> = centroids.iter().map(|c| squared_norm(c)).collect();
        supports
            .par_iter()
            .map(|s| {
                let mut best = (0, f64::INFINITY);
                for (c, cent) in centroids.iter().enumerate() {
                    let d = binary_sq_distance(s, cent, norms[c]);
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best
            })
            .collect()
    };

    for _ in 0..config.max_iters.max(1) {
        let nearest_now = nearest(&centroids);
        let next: Vec<usize> = nearest_now.iter().map(|&(c, _)| c).collect();
        if cluster_of.as_ref() == Some(&next) {
            break;
        }
        iterations += 1;
        let members = members_of(&next, k);
        let updated: Vec<Option<Vec<f64>>> = members
            .par_iter()
            .map(|m| {
                (!m.is_empty()).then(|| {
                    let n = m.len() as f64;
                    column_counts(data, m)
                        .into_iter()
                        .map(|c| f64::from(c) / n)
                        .collect()
                })
            })
            .collect();
        let empty: Vec<usize> = (0..k).filter(|&c| updated[c].is_none()).collect();
        let reseed = if !empty.is_empty()
            && config.empty_cluster_policy == EmptyClusterPolicy::ReseedFarthest
        {
            let dist: Vec<f64> = nearest_now.iter().map(|&(_, d)| d).collect();
            farthest_rows(&dist, empty.len())
        } else {
            Vec::new()
        };
        for (c, u) in updated.into_iter().enumerate() {
            if let Some(mean) = u {
                centroids[c] = mean;
            }
        }
        for (&c, &row) in empty.iter().zip(&reseed) {
            let mut v = vec![0.0; dim];
            for &j in &supports[row] {
                v[j] = 1.0;
            }
            centroids[c] = v;
        }
        let norms: Vec<f64> = centroids.iter().map(|c| squared_norm(c)).collect();
        let inertia: f64 = supports
            .iter()
            .zip(&next)
            .map(|(s, &c)| binary_sq_distance(s, &centroids[c], norms[c]))
            .sum();
        objective_trace.push(inertia);
        cluster_of = Some(next);
    }

    let binary: Vec<Vec<u64>> = centroids
        .iter()
        .map(|c| {
            let mut bits = vec![0u64; data.words_per_row()];
            for j in binarize_centroid(c) {
                bits[j / 64] |= 1 << (j % 64);
            }
            bits
        })
        .collect();
    let codebook = binary_codebook(dim, &binary)?;
    let assignment = Assignment::new(hamming_assign(data, &binary), k)?;
    let report = build_report_binary(data, &codebook, &assignment)?;
    Ok(BaselineOutcome {
        codebook,
        assignment,
        report,
        iterations,
        objective_trace,
    })
}

/// Hamming-nearest assignment against a binary codebook.
pub fn hamming_assign_codebook(
    data: &BinarySupportMatrix,
    codebook: &CentroidSet,
) -> Result<Assignment> {
    if codebook.dim() != data.n_cols() {
        return Err(ApcError::DimensionMismatch {
            expected: data.n_cols(),
            actual: codebook.dim(),
        });
    }
    let bits: Vec<Vec<u64>> = codebook
        .centroids()
        .iter()
        .map(|c| c.bits().to_vec())
        .collect();
    Assignment::new(hamming_assign(data, &bits), codebook.k())
}
