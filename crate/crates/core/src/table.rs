//! Shared helpers for the plain CSV formats the pipeline reads and writes.
//!
//! The formats are all rectangular comma-separated tables without quoting or
//! escaping, so a hand-rolled reader keeps error messages precise (every
//! failure names the file, row, and column).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Reads a file and splits it into trimmed, non-empty lines.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Data(format!("cannot read {}: {e}", path.display()))
    })?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .filter(|l| !l.trim().is_empty())
        .collect())
}

/// Splits one CSV line into trimmed fields.
pub fn split_fields(line: &str) -> Vec<String> {
    line.split(',').map(|f| f.trim().to_string()).collect()
}

/// Parses one cell as a finite f64; `row` and `col` are 1-based for messages.
pub fn parse_cell(path: &Path, row: usize, col: usize, field: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        row,
        col,
        msg: format!("expected a number, found {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row,
            col,
            msg: format!("non-finite value {field:?}"),
        });
    }
    Ok(v)
}

/// Parses one cell as a usize.
pub fn parse_index(path: &Path, row: usize, col: usize, field: &str) -> Result<usize> {
    field.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        row,
        col,
        msg: format!("expected a non-negative integer, found {field:?}"),
    })
}

/// Checks that a row has exactly `expected` fields.
pub fn expect_width(path: &Path, row: usize, fields: &[String], expected: usize) -> Result<()> {
    if fields.len() != expected {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row,
            col: fields.len(),
            msg: format!("expected {expected} columns, found {}", fields.len()),
        });
    }
    Ok(())
}

/// Writes a float so that it round-trips exactly through `parse::<f64>()`.
pub fn fmt_f64(v: f64) -> String {
    // `{}` on f64 uses the shortest representation that round-trips.
    format!("{v}")
}
