//! Clustering quality measures.
//!
//! Two distinct notions are reported and never mixed up:
//!
//! * **precision**: the share of the data's active neurons that are also
//!   active in the centroid each row is assigned to. Inactive positions do
//!   not count, so a centroid with extra active bits is not penalised.
//! * **element accuracy**: `1 - mismatches / (N * D)` over every position.
//!
//! Published tables sometimes label the second quantity "centroid
//! precision"; recomputing it from the published (total, error) counts
//! lands within about 0.01 percentage points of the printed figures, not
//! exactly on them.

use pathfinding::prelude::{kuhn_munkres, Matrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{Assignment, CentroidSet};
use crate::error::{ApcError, Result};
use crate::pattern::{and_count, popcount, xor_count, BinarySupportMatrix, PatternMatrix};

/// Column order of [`MetricsReport::csv_row`].
pub const CSV_FIELDS: [&str; 7] = [
    "k",
    "density_p",
    "precision",
    "error_count",
    "total_elements",
    "element_accuracy",
    "total_active",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub density_p: Option<f64>,
    pub precision: f64,
    pub error_count: u64,
    pub total_elements: u64,
    pub element_accuracy: f64,
    pub total_active: u64,
    /// Active neurons covered by their assigned centroid (precision numerator).
    pub matched_active: u64,
    pub cluster_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sublayer: Option<String>,
}

impl MetricsReport {
    pub fn csv_header() -> String {
        CSV_FIELDS.join(",")
    }

    /// Values in [`CSV_FIELDS`] order, full precision.
    pub fn csv_values(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.density_p.map(|p| p.to_string()).unwrap_or_default(),
            self.precision.to_string(),
            self.error_count.to_string(),
            self.total_elements.to_string(),
            self.element_accuracy.to_string(),
            self.total_active.to_string(),
        ]
    }

    pub fn csv_row(&self) -> String {
        self.csv_values().join(",")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn with_sublayer(mut self, label: impl Into<String>) -> Self {
        self.sublayer = Some(label.into());
        self
    }
}

fn check_same_shape(a: &BinarySupportMatrix, b: &BinarySupportMatrix) -> Result<()> {
    if a.n_rows() != b.n_rows() || a.n_cols() != b.n_cols() {
        return Err(ApcError::ShapeMismatch {
            left_rows: a.n_rows(),
            left_cols: a.n_cols(),
            right_rows: b.n_rows(),
            right_cols: b.n_cols(),
        });
    }
    Ok(())
}

/// `(sum A*C, sum A)` over two equally shaped binary matrices.
pub fn precision_counts(
    data: &BinarySupportMatrix,
    assigned: &BinarySupportMatrix,
) -> Result<(u64, u64)> {
    check_same_shape(data, assigned)?;
    Ok((0..data.n_rows())
        .into_par_iter()
        .map(|i| {
            let a = data.row_words(i);
            (and_count(a, assigned.row_words(i)), popcount(a))
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1)))
}

fn ratio(matched: u64, active: u64) -> Result<f64> {
    if active == 0 {
        return Err(ApcError::UndefinedMetric);
    }
    Ok(matched as f64 / active as f64)
}

/// Fraction of active data bits that are also set in the assigned centroid
/// rows. Errors when the data has no active bits at all.
pub fn clustering_precision(
    data: &BinarySupportMatrix,
    assigned: &BinarySupportMatrix,
) -> Result<f64> {
    let (matched, active) = precision_counts(data, assigned)?;
    ratio(matched, active)
}

/// Number of positions where the data and assigned-centroid bits differ.
pub fn clustering_error(data: &BinarySupportMatrix, assigned: &BinarySupportMatrix) -> Result<u64> {
    check_same_shape(data, assigned)?;
    Ok((0..data.n_rows())
        .into_par_iter()
        .map(|i| xor_count(data.row_words(i), assigned.row_words(i)))
        .sum())
}

pub fn element_accuracy(total: u64, error: u64) -> Result<f64> {
    if total == 0 || error > total {
        return Err(ApcError::InvalidInput(format!(
            "element accuracy needs 0 <= error <= total and total > 0, got error {error}, total {total}"
        )));
    }
    Ok((total - error) as f64 / total as f64)
}

fn check_assignment(
    n_rows: usize,
    n_cols: usize,
    codebook: &CentroidSet,
    assignment: &Assignment,
) -> Result<()> {
    if assignment.n_rows() != n_rows {
        return Err(ApcError::Assignment(format!(
            "assignment covers {} rows, data has {n_rows}",
            assignment.n_rows()
        )));
    }
    if codebook.dim() != n_cols {
        return Err(ApcError::DimensionMismatch {
            expected: n_cols,
            actual: codebook.dim(),
        });
    }
    if assignment.k() > codebook.k() {
        if let Some((row, &c)) = assignment
            .cluster_of()
            .iter()
            .enumerate()
            .find(|(_, &c)| c >= codebook.k())
        {
            return Err(ApcError::Assignment(format!(
                "row {row} points at cluster {c}, codebook has {} centroids",
                codebook.k()
            )));
        }
    }
    Ok(())
}

/// Materialises the N x D matrix whose row `i` is the binary state of the
/// centroid assigned to row `i`.
pub fn expand_assigned(
    codebook: &CentroidSet,
    assignment: &Assignment,
) -> Result<BinarySupportMatrix> {
    let mut words = Vec::with_capacity(assignment.n_rows() * codebook.centroid(0).bits().len());
    for (row, &c) in assignment.cluster_of().iter().enumerate() {
        let centroid = codebook.centroids().get(c).ok_or_else(|| {
            ApcError::Assignment(format!("row {row} points at missing cluster {c}"))
        })?;
        words.extend_from_slice(centroid.bits());
    }
    BinarySupportMatrix::from_words(assignment.n_rows(), codebook.dim(), words)
}

/// Full report for an already-binarised data matrix.
pub fn build_report_binary(
    data: &BinarySupportMatrix,
    codebook: &CentroidSet,
    assignment: &Assignment,
) -> Result<MetricsReport> {
    check_assignment(data.n_rows(), data.n_cols(), codebook, assignment)?;
    let cluster_of = assignment.cluster_of();
    let (matched, active, errors) = (0..data.n_rows())
        .into_par_iter()
        .map(|i| {
            let a = data.row_words(i);
            let c = codebook.centroid(cluster_of[i]).bits();
            (and_count(a, c), popcount(a), xor_count(a, c))
        })
        .reduce(|| (0, 0, 0), |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2));
    let total_elements = (data.n_rows() as u64)
        .checked_mul(data.n_cols() as u64)
        .ok_or(ApcError::Overflow("total element count"))?;
    let mut sizes = vec![0usize; codebook.k()];
    for &c in cluster_of {
        sizes[c] += 1;
    }
    Ok(MetricsReport {
        k: codebook.k(),
        density_p: codebook.density_p(),
        precision: ratio(matched, active)?,
        error_count: errors,
        total_elements,
        element_accuracy: element_accuracy(total_elements, errors)?,
        total_active: active,
        matched_active: matched,
        cluster_sizes: sizes,
        sublayer: None,
    })
}

/// Expands each row's assigned centroid to its binary state and computes
/// every [`MetricsReport`] field.
pub fn build_report(
    data: &PatternMatrix,
    codebook: &CentroidSet,
    assignment: &Assignment,
) -> Result<MetricsReport> {
    check_assignment(data.n_rows(), data.n_cols(), codebook, assignment)?;
    build_report_binary(&data.to_binary(), codebook, assignment)
}

/// Fraction of rows on which two labelings agree after the best one-to-one
/// relabeling of clusters (maximum-weight bipartite matching).
pub fn partition_agreement(truth: &[usize], found: &[usize]) -> Result<f64> {
    if truth.len() != found.len() {
        return Err(ApcError::DimensionMismatch {
            expected: truth.len(),
            actual: found.len(),
        });
    }
    if truth.is_empty() {
        return Err(ApcError::InvalidInput(
            "cannot compare empty partitions".into(),
        ));
    }
    let n_truth = truth.iter().max().unwrap() + 1;
    let n_found = found.iter().max().unwrap() + 1;
    let side = n_truth.max(n_found);
    let mut weights = Matrix::new(side, side, 0i64);
    for (&t, &f) in truth.iter().zip(found) {
        weights[(t, f)] += 1;
    }
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / truth.len() as f64)
}
