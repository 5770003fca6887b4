//! Binary file formats. All integers and reals are little-endian.
//!
//! Every file starts with a 4-byte magic and a `u16` version (currently 1).
//!
//! ```text
//! APCB  u64 n_rows, u64 n_cols, then each row bit-packed LSB-first
//!       (column j -> byte j/8, bit j%8), padded to a byte boundary.
//! APCF  u64 n_rows, u64 n_cols, then n_rows*n_cols f32 values, row-major.
//! APCC  u64 k, u64 dim, f64 density_p (0.0 = unconstrained), then for each
//!       centroid: u64 count, count ascending u64 indices, count f32
//!       intensities.
//! ```
//!
//! Readers reject bad magic, unknown versions, truncation and trailing bytes.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::codebook::{Centroid, CentroidSet};
use crate::error::{ApcError, Result};
use crate::pattern::{words_for, BinarySupportMatrix, PatternMatrix};

pub const MAGIC_BINARY: &[u8; 4] = b"APCB";
pub const MAGIC_REAL: &[u8; 4] = b"APCF";
pub const MAGIC_CODEBOOK: &[u8; 4] = b"APCC";
pub const FORMAT_VERSION: u16 = 1;

fn format_err(offset: u64, message: impl Into<String>) -> ApcError {
    ApcError::Format {
        offset,
        message: message.into(),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                format_err(
                    self.buf.len() as u64,
                    format!("truncated: needed {n} bytes at offset {}", self.pos),
                )
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(format_err(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(format_err(4, format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn dims(&mut self) -> Result<(usize, usize)> {
        let at = self.offset();
        let rows = self.u64()?;
        let cols = self.u64()?;
        if rows == 0 || cols == 0 {
            return Err(format_err(at, format!("empty matrix {rows}x{cols}")));
        }
        let rows = usize::try_from(rows).map_err(|_| format_err(at, "row count overflow"))?;
        let cols =
            usize::try_from(cols).map_err(|_| format_err(at + 8, "column count overflow"))?;
        Ok((rows, cols))
    }

    /// Checks that exactly `payload` bytes remain.
    fn expect_payload(&self, payload: Option<u64>) -> Result<()> {
        let remaining = (self.buf.len() - self.pos) as u64;
        match payload {
            Some(p) if p == remaining => Ok(()),
            Some(p) if p > remaining => Err(format_err(
                self.buf.len() as u64,
                format!("truncated payload: declared {p} bytes, found {remaining}"),
            )),
            Some(p) => Err(format_err(
                self.offset() + p,
                format!("{} trailing bytes after declared payload", remaining - p),
            )),
            None => Err(format_err(self.offset(), "declared payload size overflows")),
        }
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(format_err(
                self.offset(),
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn write_matrix_header<W: Write>(
    w: &mut W,
    magic: &[u8; 4],
    rows: usize,
    cols: usize,
) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    Ok(())
}

pub fn write_binary_matrix<W: Write>(matrix: &BinarySupportMatrix, mut w: W) -> Result<()> {
    write_matrix_header(&mut w, MAGIC_BINARY, matrix.n_rows(), matrix.n_cols())?;
    let row_bytes = matrix.n_cols().div_ceil(8);
    let mut buf = Vec::with_capacity(matrix.words_per_row() * 8);
    for i in 0..matrix.n_rows() {
        buf.clear();
        for word in matrix.row_words(i) {
            buf.extend_from_slice(&word.to_le_bytes());
        }
        w.write_all(&buf[..row_bytes])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary_matrix<R: Read>(mut r: R) -> Result<BinarySupportMatrix> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode_binary_matrix(&buf)
}

pub fn decode_binary_matrix(buf: &[u8]) -> Result<BinarySupportMatrix> {
    let mut rd = Reader::new(buf);
    rd.header(MAGIC_BINARY)?;
    let (rows, cols) = rd.dims()?;
    let row_bytes = cols.div_ceil(8);
    rd.expect_payload((rows as u64).checked_mul(row_bytes as u64))?;
    let wpr = words_for(cols);
    let mut words = Vec::with_capacity(rows * wpr);
    let mut scratch = vec![0u8; wpr * 8];
    for i in 0..rows {
        let at = rd.offset();
        scratch[..row_bytes].copy_from_slice(rd.take(row_bytes)?);
        if cols % 8 != 0 && scratch[row_bytes - 1] >> (cols % 8) != 0 {
            return Err(format_err(
                at + row_bytes as u64 - 1,
                format!("row {i} has nonzero padding bits"),
            ));
        }
        words.extend(
            scratch
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap())),
        );
    }
    rd.finish()?;
    BinarySupportMatrix::from_words(rows, cols, words)
}

/// Values are written as f32; callers that need a bit-exact round trip must
/// hold f32-representable values.
pub fn write_real_matrix<W: Write>(matrix: &PatternMatrix, mut w: W) -> Result<()> {
    write_matrix_header(&mut w, MAGIC_REAL, matrix.n_rows(), matrix.n_cols())?;
    let mut buf = Vec::with_capacity(matrix.n_cols() * 4);
    for row in matrix.rows() {
        buf.clear();
        for &v in row {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_real_matrix<R: Read>(mut r: R) -> Result<PatternMatrix> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode_real_matrix(&buf)
}

pub fn decode_real_matrix(buf: &[u8]) -> Result<PatternMatrix> {
    let mut rd = Reader::new(buf);
    rd.header(MAGIC_REAL)?;
    let (rows, cols) = rd.dims()?;
    rd.expect_payload(
        (rows as u64)
            .checked_mul(cols as u64)
            .and_then(|n| n.checked_mul(4)),
    )?;
    let payload = rd.take(rows * cols * 4)?;
    let mut values = Vec::with_capacity(rows * cols);
    for (idx, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        let (row, col) = (idx / cols, idx % cols);
        if !v.is_finite() {
            return Err(ApcError::Domain {
                row,
                col,
                message: format!("non-finite value {v}"),
            });
        }
        if v < 0.0 {
            return Err(ApcError::Domain {
                row,
                col,
                message: format!("negative value {v}"),
            });
        }
        values.push(f64::from(v));
    }
    rd.finish()?;
    PatternMatrix::new(rows, cols, values)
}

pub fn write_codebook<W: Write>(codebook: &CentroidSet, mut w: W) -> Result<()> {
    w.write_all(MAGIC_CODEBOOK)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(codebook.k() as u64).to_le_bytes())?;
    w.write_all(&(codebook.dim() as u64).to_le_bytes())?;
    w.write_all(&codebook.density_p().unwrap_or(0.0).to_le_bytes())?;
    let mut buf = Vec::new();
    for c in codebook.centroids() {
        buf.clear();
        buf.extend_from_slice(&(c.len() as u64).to_le_bytes());
        for &j in c.active_set() {
            buf.extend_from_slice(&(j as u64).to_le_bytes());
        }
        for &v in c.intensities() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_codebook<R: Read>(mut r: R) -> Result<CentroidSet> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode_codebook(&buf)
}

pub fn decode_codebook(buf: &[u8]) -> Result<CentroidSet> {
    let mut rd = Reader::new(buf);
    rd.header(MAGIC_CODEBOOK)?;
    let at = rd.offset();
    let k = rd.u64()?;
    let dim = rd.u64()?;
    if k == 0 || dim == 0 {
        return Err(format_err(at, format!("empty codebook k={k}, dim={dim}")));
    }
    // Each centroid needs at least its 8-byte count.
    if k > (buf.len() as u64) / 8 {
        return Err(format_err(
            at,
            format!("centroid count {k} exceeds file size"),
        ));
    }
    let dim = usize::try_from(dim).map_err(|_| format_err(at + 8, "dimension overflow"))?;
    let density_at = rd.offset();
    let density = rd.f64()?;
    let density_p = if density == 0.0 {
        None
    } else if density > 0.0 && density <= 1.0 {
        Some(density)
    } else {
        return Err(format_err(
            density_at,
            format!("density_p {density} outside (0, 1]"),
        ));
    };
    let mut centroids = Vec::with_capacity(k as usize);
    for c in 0..k {
        let count_at = rd.offset();
        let count = rd.u64()?;
        if count > dim as u64 {
            return Err(format_err(
                count_at,
                format!("centroid {c} declares {count} features but dim is {dim}"),
            ));
        }
        let count = count as usize;
        let mut active = Vec::with_capacity(count);
        for _ in 0..count {
            let idx_at = rd.offset();
            let j = rd.u64()?;
            if j >= dim as u64 {
                return Err(format_err(
                    idx_at,
                    format!("feature index {j} out of range"),
                ));
            }
            if active.last().is_some_and(|&prev| prev as u64 >= j) {
                return Err(format_err(
                    idx_at,
                    format!("centroid {c} indices not ascending"),
                ));
            }
            active.push(j as usize);
        }
        let mut intensities = Vec::with_capacity(count);
        for _ in 0..count {
            let v_at = rd.offset();
            let v = f32::from_le_bytes(rd.take(4)?.try_into().unwrap());
            if !(v.is_finite() && v > 0.0) {
                return Err(format_err(
                    v_at,
                    format!("intensity {v} must be finite and positive"),
                ));
            }
            intensities.push(v);
        }
        centroids.push(Centroid::new(dim, active, intensities)?);
    }
    rd.finish()?;
    CentroidSet::new(dim, density_p, centroids)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn save_binary_matrix(matrix: &BinarySupportMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_binary_matrix(matrix, create(path.as_ref())?)
}

pub fn load_binary_matrix(path: impl AsRef<Path>) -> Result<BinarySupportMatrix> {
    decode_binary_matrix(&std::fs::read(path)?)
}

pub fn save_real_matrix(matrix: &PatternMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_real_matrix(matrix, create(path.as_ref())?)
}

pub fn load_real_matrix(path: impl AsRef<Path>) -> Result<PatternMatrix> {
    decode_real_matrix(&std::fs::read(path)?)
}

pub fn save_codebook(codebook: &CentroidSet, path: impl AsRef<Path>) -> Result<()> {
    write_codebook(codebook, create(path.as_ref())?)
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<CentroidSet> {
    decode_codebook(&std::fs::read(path)?)
}

/// Loads a pattern matrix from an APCF file, an APCB file (bits become
/// 0.0/1.0), or the plain-text fixture format, chosen by magic.
pub fn load_patterns(path: impl AsRef<Path>) -> Result<PatternMatrix> {
    let buf = std::fs::read(path)?;
    match buf.get(..4) {
        Some(m) if m == MAGIC_REAL => decode_real_matrix(&buf),
        Some(m) if m == MAGIC_BINARY => decode_binary_matrix(&buf)?.to_pattern(),
        _ => super::text::read_text_matrix(buf.as_slice()),
    }
}
