//! Plain-text fixture format: one row per line, values separated by
//! whitespace. Blank lines and lines starting with `#` are skipped.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{ApcError, Result};
use crate::pattern::PatternMatrix;

pub fn read_text_matrix<R: Read>(r: R) -> Result<PatternMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .enumerate()
            .map(|(col, tok)| {
                tok.parse::<f64>().map_err(|e| ApcError::Domain {
                    row: rows.len(),
                    col,
                    message: format!("line {}: cannot parse {tok:?}: {e}", line_no + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ApcError::InvalidInput("text matrix has no rows".into()));
    }
    PatternMatrix::from_rows(&rows)
}

pub fn write_text_matrix<W: Write>(matrix: &PatternMatrix, mut w: W) -> Result<()> {
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}
