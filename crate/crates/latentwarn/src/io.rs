//! CSV and JSON file formats.
//!
//! CSV files are row = time, column = channel, comma separated, with an
//! optional single header row. Numbers are written with 15 significant
//! digits; `NaN` marks undefined values.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use latentwarn_core::ingest::RawRecording;
use latentwarn_core::Matrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// A numeric table read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub data: Matrix,
}

/// Formats `v` rounded to 15 significant digits, in the shortest form that
/// reads back to the rounded value.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.14e}").parse().expect("formatted float parses");
    let s = format!("{rounded:?}");
    s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
}

fn parse_cell(cell: &str) -> Option<f64> {
    let t = cell.trim();
    match t {
        "NaN" | "nan" => Some(f64::NAN),
        _ => t.parse().ok(),
    }
}

/// Reads a numeric table. The first row is taken as a header when any of its
/// cells is not a number.
pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_table(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse_table(text: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut header = None;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("row {}: malformed CSV", line + 1))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if line == 0 && record.iter().any(|c| parse_cell(c).is_none()) {
            header = Some(record.iter().map(str::to_owned).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        match width {
            Some(w) if w != record.len() => bail!("row {}: expected {w} columns, found {}", line + 1, record.len()),
            _ => width = Some(record.len()),
        }
        for (col, cell) in record.iter().enumerate() {
            match parse_cell(cell) {
                Some(v) => values.push(v),
                None => bail!("row {}, column {}: `{cell}` is not a number", line + 1, col + 1),
            }
        }
        rows += 1;
    }
    let Some(cols) = width else { bail!("no data rows") };
    if rows == 0 {
        bail!("no data rows");
    }
    Ok(Table { header, data: Matrix::from_vec(rows, cols, values)? })
}

/// Writes a table; `header` must match the column count.
pub fn write_table(path: &Path, header: Option<&[String]>, data: &Matrix) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    if let Some(h) = header {
        if h.len() != data.cols() {
            bail!("header has {} names for {} columns", h.len(), data.cols());
        }
        writer.write_record(h)?;
    }
    for row in data.iter_rows() {
        writer.write_record(row.iter().map(|v| format_number(*v)))?;
    }
    let bytes = writer.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// Loads a recording; `transpose` reads channel-major files (one channel per
/// row).
pub fn load_recording(path: &Path, sample_rate: f64, transpose: bool) -> Result<RawRecording> {
    let table = read_table(path)?;
    let samples = if transpose { table.data.transpose() } else { table.data };
    let names = if transpose { None } else { table.header };
    RawRecording::new(samples, sample_rate, names).with_context(|| format!("in {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

/// Column names `prefix1 .. prefixN`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}
