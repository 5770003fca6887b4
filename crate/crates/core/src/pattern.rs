//! Activation pattern representations.
//!
//! A [`PatternMatrix`] holds non-negative activation magnitudes, one row per
//! token. A zero entry marks an inactive neuron. [`BinarySupportMatrix`] is
//! the bit-packed view of the same rows where bit `j` of row `i` is set iff
//! `value(i, j) > 0`.

use std::cmp::Ordering;

use crate::error::{ApcError, Result};

/// Number of `u64` words needed to hold `n_bits` bits.
#[inline]
pub fn words_for(n_bits: usize) -> usize {
    n_bits.div_ceil(64)
}

/// Popcount of `a & b` over two equally sized word slices.
#[inline]
pub fn and_count(a: &[u64], b: &[u64]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| u64::from((x & y).count_ones()))
        .sum()
}

/// Popcount of `a ^ b`, i.e. the Hamming distance between two bitsets.
#[inline]
pub fn xor_count(a: &[u64], b: &[u64]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| u64::from((x ^ y).count_ones()))
        .sum()
}

#[inline]
pub fn popcount(a: &[u64]) -> u64 {
    a.iter().map(|x| u64::from(x.count_ones())).sum()
}

/// Converts a fraction of `n` to a count, snapping products that sit within
/// floating-point noise of an integer (so `0.3 * 10` is 3, not 4 after ceil).
pub(crate) fn fraction_count(fraction: f64, n: usize, ceil: bool) -> usize {
    let x = fraction * n as f64;
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        return nearest as usize;
    }
    if ceil {
        x.ceil() as usize
    } else {
        x.floor() as usize
    }
}

/// Dense matrix of non-negative activation magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl PatternMatrix {
    /// Builds a matrix from row-major values, rejecting non-finite or
    /// negative entries.
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(ApcError::InvalidInput(format!(
                "pattern matrix must be non-empty, got {n_rows}x{n_cols}"
            )));
        }
        if values.len() != n_rows * n_cols {
            return Err(ApcError::InvalidInput(format!(
                "expected {} values for {n_rows}x{n_cols}, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        for (idx, &v) in values.iter().enumerate() {
            let (row, col) = (idx / n_cols, idx % n_cols);
            if !v.is_finite() {
                return Err(ApcError::NonFinite { row, col });
            }
            if v < 0.0 {
                return Err(ApcError::NegativeValue { row, col, value: v });
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_cols) {
            return Err(ApcError::InvalidInput(format!(
                "row {i} has {} values, expected {n_cols}",
                r.len()
            )));
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols)
    }

    /// Active feature indices of `row`, ascending.
    pub fn support_of(&self, row: usize) -> Result<Vec<usize>> {
        if row >= self.n_rows {
            return Err(ApcError::RowOutOfRange {
                index: row,
                n_rows: self.n_rows,
            });
        }
        Ok(self
            .row(row)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(j, _)| j)
            .collect())
    }

    /// Bit-packed support view.
    pub fn to_binary(&self) -> BinarySupportMatrix {
        let wpr = words_for(self.n_cols);
        let mut bits = vec![0u64; self.n_rows * wpr];
        for (row, out) in self.rows().zip(bits.chunks_exact_mut(wpr)) {
            for (j, &v) in row.iter().enumerate() {
                if v > 0.0 {
                    out[j / 64] |= 1u64 << (j % 64);
                }
            }
        }
        BinarySupportMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            words_per_row: wpr,
            bits,
        }
    }
}

/// Row-major bit-packed activation states; bit `j % 64` of word `j / 64`
/// holds column `j`. Padding bits past `n_cols` are always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySupportMatrix {
    n_rows: usize,
    n_cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl BinarySupportMatrix {
    /// All-zero matrix.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        let wpr = words_for(n_cols);
        Self {
            n_rows,
            n_cols,
            words_per_row: wpr,
            bits: vec![0; n_rows * wpr],
        }
    }

    /// Builds from rows of 0/1 flags (any nonzero counts as set).
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_cols == 0 || rows.iter().any(|r| r.len() != n_cols) {
            return Err(ApcError::InvalidInput(
                "binary rows must be non-empty and equally sized".into(),
            ));
        }
        let mut m = Self::zeros(rows.len(), n_cols);
        for (i, r) in rows.iter().enumerate() {
            for (j, &b) in r.iter().enumerate() {
                if b != 0 {
                    m.set(i, j, true);
                }
            }
        }
        Ok(m)
    }

    /// Builds from packed words; padding bits past `n_cols` are cleared.
    pub fn from_words(n_rows: usize, n_cols: usize, mut bits: Vec<u64>) -> Result<Self> {
        let wpr = words_for(n_cols);
        if bits.len() != n_rows * wpr {
            return Err(ApcError::InvalidInput(format!(
                "expected {} words for {n_rows}x{n_cols}, got {}",
                n_rows * wpr,
                bits.len()
            )));
        }
        let tail = n_cols % 64;
        if tail != 0 {
            let mask = (1u64 << tail) - 1;
            for row in bits.chunks_exact_mut(wpr) {
                row[wpr - 1] &= mask;
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            words_per_row: wpr,
            bits,
        })
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    #[inline]
    pub fn row_words(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.row_words(i)[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        assert!(
            i < self.n_rows && j < self.n_cols,
            "bit ({i}, {j}) out of range"
        );
        let w = &mut self.bits[i * self.words_per_row + j / 64];
        if on {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    #[inline]
    pub fn row_popcount(&self, i: usize) -> u64 {
        popcount(self.row_words(i))
    }

    pub fn total_popcount(&self) -> u64 {
        popcount(&self.bits)
    }

    /// Set column indices of row `i`, ascending.
    pub fn row_support(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.row_popcount(i) as usize);
        for (w, &word) in self.row_words(i).iter().enumerate() {
            let mut word = word;
            while word != 0 {
                out.push(w * 64 + word.trailing_zeros() as usize);
                word &= word - 1;
            }
        }
        out
    }

    /// Re-expands the bits to a 0.0/1.0 pattern matrix.
    pub fn to_pattern(&self) -> Result<PatternMatrix> {
        let mut values = vec![0.0; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            for j in self.row_support(i) {
                values[i * self.n_cols + j] = 1.0;
            }
        }
        PatternMatrix::new(self.n_rows, self.n_cols, values)
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }
}

/// Zeroes the `floor(target_sparsity * n_cols)` smallest-magnitude entries of
/// every row and stores the remaining magnitudes.
///
/// `values` is row-major with `n_cols` columns and may hold signed values.
/// Ties on magnitude zero the lower column index first. Exact zeros have the
/// smallest magnitude and are therefore always part of the zeroed set.
pub fn apply_magnitude_threshold(
    values: &[f64],
    n_cols: usize,
    target_sparsity: f64,
) -> Result<PatternMatrix> {
    if !(0.0..1.0).contains(&target_sparsity) {
        return Err(ApcError::InvalidConfig(format!(
            "target sparsity must lie in [0, 1), got {target_sparsity}"
        )));
    }
    if n_cols == 0 || values.is_empty() || !values.len().is_multiple_of(n_cols) {
        return Err(ApcError::InvalidInput(format!(
            "{} values do not form rows of {n_cols} columns",
            values.len()
        )));
    }
    let n_rows = values.len() / n_cols;
    let n_zero = fraction_count(target_sparsity, n_cols, false);
    let mut out = Vec::with_capacity(values.len());
    let mut order: Vec<usize> = Vec::with_capacity(n_cols);
    for (row, chunk) in values.chunks_exact(n_cols).enumerate() {
        if let Some(col) = chunk.iter().position(|v| !v.is_finite()) {
            return Err(ApcError::NonFinite { row, col });
        }
        let start = out.len();
        out.extend(chunk.iter().map(|v| v.abs()));
        if n_zero > 0 {
            let mags = &out[start..];
            order.clear();
            order.extend(0..n_cols);
            let by_magnitude =
                |a: &usize, b: &usize| -> Ordering { mags[*a].total_cmp(&mags[*b]).then(a.cmp(b)) };
            if n_zero < n_cols {
                order.select_nth_unstable_by(n_zero - 1, by_magnitude);
            }
            for &j in &order[..n_zero] {
                out[start + j] = 0.0;
            }
        }
    }
    PatternMatrix::new(n_rows, n_cols, out)
}
