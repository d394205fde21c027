//! Plain numeric CSV tables: one header line, then one row per sample.
//!
//! Values are written with 17 significant digits in `{:e}` form, which
//! parses back to the identical f64 and never depends on locale.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Formats a value with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn render_table(header: &[&str], columns: &[&[f64]]) -> String {
    let rows = columns.first().map(|c| c.len()).unwrap_or(0);
    debug_assert!(columns.iter().all(|c| c.len() == rows));
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..rows {
        for (i, col) in columns.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", fmt_f64(col[r]));
        }
        out.push('\n');
    }
    out
}

pub fn write_table(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, render_table(header, columns)).map_err(|e| Error::io(path, e))
}

/// A parsed table: header names and column-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn require(&self, name: &str, path: &Path) -> Result<&[f64]> {
        self.column(name).ok_or_else(|| Error::Csv {
            path: path.to_path_buf(),
            msg: format!("missing column '{name}'"),
        })
    }
}

pub fn parse_table(text: &str, path: &Path) -> Result<Table> {
    let bad = |msg: String| Error::Csv {
        path: path.to_path_buf(),
        msg,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .split(',')
        .map(|h| h.trim().to_string())
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(bad(format!(
                "line {}: {} fields, header has {}",
                i + 2,
                fields.len(),
                header.len()
            )));
        }
        for (col, f) in columns.iter_mut().zip(fields) {
            let v = f
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("line {}: '{}': {e}", i + 2, f.trim())))?;
            col.push(v);
        }
    }
    Ok(Table { header, columns })
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, path)
}
