//! Dataset readers (CSV, IDX) and result writers.
//!
//! Files store one sample per row; in memory every sample is a column.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, WriterBuilder};

use crate::error::{Error, Result};
use crate::kmeans::Partition;
use crate::linalg::{dense_from_columns, DenseMatrix};

#[derive(Debug, Clone)]
pub struct Dataset {
    /// One point per column.
    pub data: DenseMatrix,
    pub labels: Option<Vec<i64>>,
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, message: message.into() }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => parse_err(line, format!("{kind:?}")),
    }
}

/// Reads a headerless numeric CSV. With `label_column`, the last column holds
/// integer labels and is split off.
pub fn load_csv(path: impl AsRef<Path>, label_column: bool) -> Result<Dataset> {
    read_csv(File::open(path)?, label_column)
}

pub fn read_csv(reader: impl Read, label_column: bool) -> Result<Dataset> {
    let mut rdr = ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut width = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(parse_err(line, format!("expected {w} fields, found {}", record.len())));
        }
        let features = if label_column { w - 1 } else { w };
        if features == 0 {
            return Err(parse_err(line, "no feature columns"));
        }
        for (j, cell) in record.iter().enumerate() {
            if j < features {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(line, format!("field {} is not a number: {cell:?}", j + 1)))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("field {} is not finite", j + 1)));
                }
                values.push(v);
            } else {
                let l: i64 = cell
                    .parse()
                    .map_err(|_| parse_err(line, format!("label {cell:?} is not an integer")))?;
                labels.push(l);
            }
        }
        rows += 1;
    }
    let Some(w) = width else {
        return Err(parse_err(1, "file contains no data"));
    };
    let features = if label_column { w - 1 } else { w };
    // row-major samples become column-major points
    let data = dense_from_columns(features, rows, values)?;
    Ok(Dataset { data, labels: label_column.then_some(labels) })
}

/// Writes points as rows in shortest round-trip decimal form.
pub fn save_csv(path: impl AsRef<Path>, data: &DenseMatrix, labels: Option<&[i64]>) -> Result<()> {
    let mut w = WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    for (j, col) in data.column_iter().enumerate() {
        let mut row: Vec<String> = col.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            row.push(l[j].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One integer label per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(t.parse().map_err(|_| parse_err(i as u64 + 1, format!("label {t:?} is not an integer")))?);
    }
    Ok(labels)
}

/// Writes labels `1..=k`, one per line.
pub fn write_labels(path: impl AsRef<Path>, p: &Partition) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for &l in &p.labels {
        writeln!(w, "{}", l + 1)?;
    }
    w.flush()?;
    Ok(())
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("truncated idx header".into()))
}

/// Parses an IDX image file into a `rows·cols × count` matrix scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<DenseMatrix> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES {
        return Err(Error::Format(format!("idx image magic {magic:#010x}, expected {IDX_IMAGES:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let pixels = be_u32(bytes, 8)? as usize * be_u32(bytes, 12)? as usize;
    let payload = &bytes[16..];
    if payload.len() != count * pixels {
        return Err(Error::Format(format!("idx image payload has {} bytes, expected {}", payload.len(), count * pixels)));
    }
    Ok(DenseMatrix::from_iterator(pixels, count, payload.iter().map(|&b| b as f64 / 255.0)))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<i64>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS {
        return Err(Error::Format(format!("idx label magic {magic:#010x}, expected {IDX_LABELS:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::Format(format!("idx label payload has {} bytes, expected {count}", payload.len())));
    }
    Ok(payload.iter().map(|&b| b as i64).collect())
}

pub fn load_idx(images: impl AsRef<Path>, labels: Option<&Path>) -> Result<Dataset> {
    let data = parse_idx_images(&std::fs::read(images)?)?;
    let labels = match labels {
        Some(p) => {
            let l = parse_idx_labels(&std::fs::read(p)?)?;
            if l.len() != data.ncols() {
                return Err(Error::Format(format!("{} labels for {} images", l.len(), data.ncols())));
            }
            Some(l)
        }
        None => None,
    };
    Ok(Dataset { data, labels })
}
