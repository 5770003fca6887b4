//! Activation-aware clustering.
//!
//! Each iteration runs two steps:
//!
//! 1. **Assignment.** The distance between a row and a centroid looks only at
//!    the row's active neurons: `1 - |supp(row) ∩ active(c)| / |supp(row)|`.
//!    Rows are handed out globally nearest-first, `(distance, row, centroid)`
//!    ascending, and a centroid stops accepting rows once it reaches its
//!    capacity (`ceil(N / k)` by default).
//! 2. **Update.** Member activations are summed per feature, and the
//!    `ceil(p * D)` features with the largest sums form the new centroid. The
//!    sums are kept as the centroid's intensities.
//!
//! The method also goes by the name APC (activation pattern clustering).
//!
//! Every tie is broken towards the lower index and all parallel work reduces
//! in a fixed order, so results do not depend on the number of worker threads.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::codebook::{Assignment, Centroid, CentroidSet};
use crate::error::{ApcError, Result};
use crate::metrics::{build_report_binary, MetricsReport};
use crate::pattern::{fraction_count, words_for, BinarySupportMatrix, PatternMatrix};

/// Candidates kept per row before falling back to a full pass.
pub const DEFAULT_CANDIDATE_BUFFER: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub k: usize,
    /// Fraction of features kept active in every centroid.
    pub density_p: f64,
    /// Per-cluster row limit; `None` means `ceil(N / k)`.
    pub capacity: Option<usize>,
    pub max_iters: usize,
    /// Stop once fewer than this fraction of rows change cluster.
    pub min_reassigned_fraction: f64,
    pub seed: u64,
    pub balanced: bool,
    pub candidate_buffer: usize,
}

impl ClusteringConfig {
    pub fn new(k: usize, density_p: f64) -> Self {
        Self {
            k,
            density_p,
            capacity: None,
            max_iters: 50,
            min_reassigned_fraction: 0.001,
            seed: 0,
            balanced: true,
            candidate_buffer: DEFAULT_CANDIDATE_BUFFER,
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

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = Some(capacity);
        self
    }

    pub fn with_balanced(mut self, balanced: bool) -> Self {
        self.balanced = balanced;
        self
    }

    /// Validates against `n_rows` and returns the effective capacity.
    pub fn effective_capacity(&self, n_rows: usize) -> Result<usize> {
        if self.k == 0 || self.k > n_rows {
            return Err(ApcError::InvalidConfig(format!(
                "k must satisfy 1 <= k <= N (N = {n_rows}), got k = {}",
                self.k
            )));
        }
        check_density(self.density_p)?;
        if !(0.0..=1.0).contains(&self.min_reassigned_fraction) {
            return Err(ApcError::InvalidConfig(format!(
                "min_reassigned_fraction must lie in [0, 1], got {}",
                self.min_reassigned_fraction
            )));
        }
        if self.candidate_buffer == 0 {
            return Err(ApcError::InvalidConfig(
                "candidate buffer must be positive".into(),
            ));
        }
        if !self.balanced {
            return Ok(n_rows);
        }
        let capacity = self.capacity.unwrap_or_else(|| n_rows.div_ceil(self.k));
        check_capacity(capacity, self.k, n_rows)?;
        Ok(capacity)
    }
}

fn check_density(density_p: f64) -> Result<()> {
    if density_p > 0.0 && density_p <= 1.0 {
        Ok(())
    } else {
        Err(ApcError::InvalidConfig(format!(
            "density_p must lie in (0, 1], got {density_p}"
        )))
    }
}

fn check_capacity(capacity: usize, k: usize, n_rows: usize) -> Result<()> {
    match capacity.checked_mul(k) {
        Some(total) if total >= n_rows => Ok(()),
        _ => Err(ApcError::InfeasibleCapacity {
            capacity,
            k,
            n_rows,
        }),
    }
}

/// Number of active features per centroid: `ceil(p * D)`.
pub fn active_count(density_p: f64, dim: usize) -> usize {
    fraction_count(density_p, dim, true).clamp(1, dim)
}

/// Exact active-overlap distance `missed / support`, compared as a rational
/// so that equal fractions tie exactly. An empty-support row has distance 1.
#[derive(Debug, Clone, Copy)]
pub struct OverlapDistance {
    missed: u32,
    support: u32,
}

impl OverlapDistance {
    pub fn new(overlap: u64, support: u64) -> Self {
        debug_assert!(overlap <= support);
        if support == 0 {
            Self {
                missed: 1,
                support: 1,
            }
        } else {
            Self {
                missed: (support - overlap) as u32,
                support: support as u32,
            }
        }
    }

    pub fn value(self) -> f64 {
        f64::from(self.missed) / f64::from(self.support)
    }
}

impl Ord for OverlapDistance {
    fn cmp(&self, other: &Self) -> Ordering {
        (u64::from(self.missed) * u64::from(other.support))
            .cmp(&(u64::from(other.missed) * u64::from(self.support)))
    }
}

impl PartialOrd for OverlapDistance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for OverlapDistance {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OverlapDistance {}

#[inline]
fn row_distance(row_bits: &[u64], support: u64, centroid: &Centroid) -> OverlapDistance {
    OverlapDistance::new(centroid.overlap(row_bits), support)
}

/// `1 - |supp(row) ∩ active(c)| / |supp(row)|`, or 1.0 for an all-zero row.
/// Centroid intensities play no part.
pub fn active_overlap_distance(row: &[f64], centroid: &Centroid) -> Result<f64> {
    if row.len() != centroid.dim() {
        return Err(ApcError::DimensionMismatch {
            expected: centroid.dim(),
            actual: row.len(),
        });
    }
    let mut bits = vec![0u64; words_for(row.len())];
    let mut support = 0u64;
    for (j, _) in row.iter().enumerate().filter(|(_, &v)| v > 0.0) {
        bits[j / 64] |= 1 << (j % 64);
        support += 1;
    }
    Ok(row_distance(&bits, support, centroid).value())
}

/// Builds a centroid from per-feature sums: the `n_active` largest sums win
/// (ties to the lower index); features whose sum is zero are dropped.
pub fn centroid_from_sums(sums: &[f64], n_active: usize) -> Centroid {
    let dim = sums.len();
    let mut order: Vec<usize> = (0..dim).collect();
    let by_sum_desc = |a: &usize, b: &usize| sums[*b].total_cmp(&sums[*a]).then(a.cmp(b));
    let n_active = n_active.min(dim);
    if n_active < dim {
        order.select_nth_unstable_by(n_active, by_sum_desc);
    }
    let mut active: Vec<usize> = order[..n_active]
        .iter()
        .copied()
        .filter(|&j| sums[j] > 0.0)
        .collect();
    active.sort_unstable();
    let intensities = active
        .iter()
        .map(|&j| (sums[j] as f32).max(f32::MIN_POSITIVE))
        .collect();
    Centroid::new(dim, active, intensities).expect("selected features are ascending and in range")
}

/// Seeds `k` centroids from distinct rows drawn with a ChaCha8 stream.
pub fn init_centroids(
    data: &PatternMatrix,
    k: usize,
    density_p: f64,
    seed: u64,
) -> Result<CentroidSet> {
    if k == 0 || k > data.n_rows() {
        return Err(ApcError::InvalidConfig(format!(
            "k must satisfy 1 <= k <= N (N = {}), got k = {k}",
            data.n_rows()
        )));
    }
    check_density(density_p)?;
    let n_active = active_count(density_p, data.n_cols());
    let centroids = sample_rows(data.n_rows(), k, seed)
        .into_iter()
        .map(|row| centroid_from_sums(data.row(row), n_active))
        .collect();
    CentroidSet::new(data.n_cols(), Some(density_p), centroids)
}

/// `k` distinct row indices in `0..n_rows`, deterministic in `seed`.
pub fn sample_rows(n_rows: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, n_rows, k).into_vec()
}

/// Capacity-constrained greedy assignment over an arbitrary distance.
///
/// All `(distance, row, centroid)` triples are consumed in ascending order;
/// a triple is accepted iff its row is still unassigned and its centroid is
/// below `capacity`. Only the `candidate_buffer` best centroids per row are
/// materialised up front. When a row's buffer runs dry, it is refilled from
/// the centroids that still have room, which keeps the result identical to a
/// pass over the full sorted triple list.
pub fn greedy_assign_by<D, F>(
    n_rows: usize,
    k: usize,
    capacity: usize,
    candidate_buffer: usize,
    distance: F,
) -> Result<Vec<usize>>
where
    D: Ord + Copy + Send,
    F: Fn(usize, usize) -> D + Sync,
{
    if k == 0 {
        return Err(ApcError::InvalidConfig("k must be positive".into()));
    }
    check_capacity(capacity, k, n_rows)?;
    let buffer = candidate_buffer.max(1);

    let best_of = |row: usize, allowed: &dyn Fn(usize) -> bool| -> Vec<(D, usize)> {
        let mut cands: Vec<(D, usize)> = (0..k)
            .filter(|&c| allowed(c))
            .map(|c| (distance(row, c), c))
            .collect();
        if cands.len() > buffer {
            cands.select_nth_unstable(buffer);
            cands.truncate(buffer);
        }
        // Stored descending so the next candidate pops off the end.
        cands.sort_unstable_by(|a, b| b.cmp(a));
        cands
    };

    let mut lists: Vec<Vec<(D, usize)>> = (0..n_rows)
        .into_par_iter()
        .map(|row| best_of(row, &|_| true))
        .collect();

    let mut heap: BinaryHeap<Reverse<(D, usize, usize)>> = lists
        .iter_mut()
        .enumerate()
        .filter_map(|(row, list)| list.pop().map(|(d, c)| Reverse((d, row, c))))
        .collect();

    let mut sizes = vec![0usize; k];
    let mut cluster_of = vec![usize::MAX; n_rows];
    while let Some(Reverse((_, row, c))) = heap.pop() {
        if sizes[c] < capacity {
            sizes[c] += 1;
            cluster_of[row] = c;
            continue;
        }
        if lists[row].is_empty() {
            // Every centroid tried so far is full and stays full.
            lists[row] = best_of(row, &|c| sizes[c] < capacity);
        }
        if let Some((d, c)) = lists[row].pop() {
            heap.push(Reverse((d, row, c)));
        }
    }
    debug_assert!(cluster_of.iter().all(|&c| c < k));
    Ok(cluster_of)
}

fn supports(data: &BinarySupportMatrix) -> Vec<u64> {
    (0..data.n_rows()).map(|i| data.row_popcount(i)).collect()
}

fn check_codebook_dim(data: &BinarySupportMatrix, codebook: &CentroidSet) -> Result<()> {
    if codebook.dim() != data.n_cols() {
        return Err(ApcError::DimensionMismatch {
            expected: data.n_cols(),
            actual: codebook.dim(),
        });
    }
    Ok(())
}

/// Balanced assignment of binarised rows with an explicit candidate buffer.
pub fn balanced_assign_binary(
    data: &BinarySupportMatrix,
    codebook: &CentroidSet,
    capacity: usize,
    candidate_buffer: usize,
) -> Result<Assignment> {
    check_capacity(capacity, codebook.k(), data.n_rows())?;
    check_codebook_dim(data, codebook)?;
    let support = supports(data);
    let cluster_of = greedy_assign_by(
        data.n_rows(),
        codebook.k(),
        capacity,
        candidate_buffer,
        |row, c| row_distance(data.row_words(row), support[row], codebook.centroid(c)),
    )?;
    Assignment::new(cluster_of, codebook.k())
}

/// Globally nearest-first assignment with at most `capacity` rows per cluster.
pub fn balanced_assign(
    data: &PatternMatrix,
    codebook: &CentroidSet,
    capacity: usize,
) -> Result<Assignment> {
    check_capacity(capacity, codebook.k(), data.n_rows())?;
    balanced_assign_binary(
        &data.to_binary(),
        codebook,
        capacity,
        DEFAULT_CANDIDATE_BUFFER,
    )
}

/// Unconstrained nearest-centroid assignment (ties to the lower index).
pub fn nearest_assign_binary(
    data: &BinarySupportMatrix,
    codebook: &CentroidSet,
) -> Result<Assignment> {
    check_codebook_dim(data, codebook)?;
    let cluster_of = (0..data.n_rows())
        .into_par_iter()
        .map(|row| {
            let bits = data.row_words(row);
            let support = data.row_popcount(row);
            (0..codebook.k())
                .min_by_key(|&c| (row_distance(bits, support, codebook.centroid(c)), c))
                .expect("codebook is non-empty")
        })
        .collect();
    Assignment::new(cluster_of, codebook.k())
}

pub fn nearest_assign(data: &PatternMatrix, codebook: &CentroidSet) -> Result<Assignment> {
    nearest_assign_binary(&data.to_binary(), codebook)
}

/// Per-cluster centroids from summed member activations; `None` marks an
/// empty cluster.
pub fn update_centroids_partial(
    data: &PatternMatrix,
    assignment: &Assignment,
    density_p: f64,
) -> Result<Vec<Option<Centroid>>> {
    check_density(density_p)?;
    if assignment.n_rows() != data.n_rows() {
        return Err(ApcError::Assignment(format!(
            "assignment covers {} rows, data has {}",
            assignment.n_rows(),
            data.n_rows()
        )));
    }
    let n_active = active_count(density_p, data.n_cols());
    Ok(assignment
        .members()
        .into_par_iter()
        .map(|members| {
            if members.is_empty() {
                return None;
            }
            let mut sums = vec![0.0f64; data.n_cols()];
            for &row in &members {
                for (s, &v) in sums.iter_mut().zip(data.row(row)) {
                    *s += v;
                }
            }
            Some(centroid_from_sums(&sums, n_active))
        })
        .collect())
}

/// Feature-sum plus top-`ceil(p * D)` centroid update. Empty clusters are
/// reported as [`ApcError::EmptyClusters`]; [`cluster_awc`] reseeds them.
pub fn update_centroids(
    data: &PatternMatrix,
    assignment: &Assignment,
    density_p: f64,
) -> Result<CentroidSet> {
    let partial = update_centroids_partial(data, assignment, density_p)?;
    let empty: Vec<usize> = partial
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_none())
        .map(|(i, _)| i)
        .collect();
    if !empty.is_empty() {
        return Err(ApcError::EmptyClusters(empty));
    }
    CentroidSet::new(
        data.n_cols(),
        Some(density_p),
        partial.into_iter().flatten().collect(),
    )
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub reassigned: usize,
    pub precision: f64,
    pub max_cluster_size: usize,
    pub reseeded: usize,
}

/// Snapshot handed to an observer after each iteration's update step.
pub struct IterationState<'a> {
    pub iter: usize,
    pub capacity: usize,
    /// Centroids the assignment was computed against.
    pub assigned_against: &'a CentroidSet,
    pub assignment: &'a Assignment,
    /// Centroids after the update step.
    pub codebook: &'a CentroidSet,
    /// Clusters whose centroid was reseeded this iteration.
    pub reseeded: &'a [usize],
    pub record: &'a IterationRecord,
}

#[derive(Debug, Clone)]
pub struct AwcOutcome {
    pub codebook: CentroidSet,
    pub assignment: Assignment,
    pub report: MetricsReport,
    pub trace: Vec<IterationRecord>,
}

pub fn cluster_awc(data: &PatternMatrix, config: &ClusteringConfig) -> Result<AwcOutcome> {
    cluster_awc_observed(data, config, |_| {})
}

/// Runs the clustering loop, calling `observer` after every iteration.
pub fn cluster_awc_observed<F>(
    data: &PatternMatrix,
    config: &ClusteringConfig,
    mut observer: F,
) -> Result<AwcOutcome>
where
    F: FnMut(&IterationState<'_>),
{
    let capacity = config.effective_capacity(data.n_rows())?;
    let bin = data.to_binary();
    let support = supports(&bin);
    let n_active = active_count(config.density_p, data.n_cols());

    let mut codebook = init_centroids(data, config.k, config.density_p, config.seed)?;
    let mut previous: Option<Assignment> = None;
    let mut trace = Vec::new();
    let mut last_report = None;

    for iter in 0..config.max_iters.max(1) {
        let assignment = if config.balanced {
            balanced_assign_binary(&bin, &codebook, capacity, config.candidate_buffer)?
        } else {
            nearest_assign_binary(&bin, &codebook)?
        };
        let reassigned = previous
            .as_ref()
            .map_or(data.n_rows(), |p| assignment.count_changed(p));

        let mut partial = update_centroids_partial(data, &assignment, config.density_p)?;
        let empty: Vec<usize> = (0..partial.len())
            .filter(|&c| partial[c].is_none())
            .collect();
        if !empty.is_empty() {
            let worst = worst_represented(&bin, &support, &codebook, &assignment, empty.len());
            for (&c, &row) in empty.iter().zip(&worst) {
                partial[c] = Some(centroid_from_sums(data.row(row), n_active));
            }
        }
        let updated = CentroidSet::new(
            data.n_cols(),
            Some(config.density_p),
            partial.into_iter().flatten().collect(),
        )?;

        let report = build_report_binary(&bin, &updated, &assignment)?;
        let record = IterationRecord {
            iter,
            reassigned,
            precision: report.precision,
            max_cluster_size: assignment.max_size(),
            reseeded: empty.len(),
        };
        observer(&IterationState {
            iter,
            capacity,
            assigned_against: &codebook,
            assignment: &assignment,
            codebook: &updated,
            reseeded: &empty,
            record: &record,
        });
        trace.push(record);
        codebook = updated;
        last_report = Some(report);

        let converged = (reassigned as f64) < config.min_reassigned_fraction * data.n_rows() as f64;
        previous = Some(assignment);
        if converged {
            break;
        }
    }

    Ok(AwcOutcome {
        codebook,
        assignment: previous.expect("at least one iteration ran"),
        report: last_report.expect("at least one iteration ran"),
        trace,
    })
}

/// The `count` rows farthest from their assigned centroid, farthest first,
/// ties to the lower row. Rows with no active neurons cannot seed a useful
/// centroid and are only used when nothing else is left.
fn worst_represented(
    bin: &BinarySupportMatrix,
    support: &[u64],
    codebook: &CentroidSet,
    assignment: &Assignment,
    count: usize,
) -> Vec<usize> {
    let cluster_of = assignment.cluster_of();
    let mut rows: Vec<(bool, OverlapDistance, usize)> = (0..bin.n_rows())
        .into_par_iter()
        .map(|row| {
            let d = row_distance(
                bin.row_words(row),
                support[row],
                codebook.centroid(cluster_of[row]),
            );
            (support[row] == 0, d, row)
        })
        .collect();
    rows.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    rows.into_iter()
        .take(count)
        .map(|(_, _, row)| row)
        .collect()
}

/// Writes `iter,reassigned,precision` lines, header first.
pub fn write_trace_csv<W: std::io::Write>(trace: &[IterationRecord], mut out: W) -> Result<()> {
    writeln!(out, "iter,reassigned,precision")?;
    for r in trace {
        writeln!(out, "{},{},{}", r.iter, r.reassigned, r.precision)?;
    }
    Ok(())
}
