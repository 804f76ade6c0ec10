//! Feature matrices (`SLHF` binary or CSV) and label text files.
//!
//! `SLHF` layout, all little-endian:
//!
//! ```text
//! b"SLHF" | u32 version = 1 | u32 rows | u32 cols | rows*cols f32, row-major
//! ```
//!
//! `rows` is the feature dimension and `cols` the sample count, so each
//! column of the loaded matrix is one sample.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::matrixkit::Matrix;

pub const FEATURES_MAGIC: [u8; 4] = *b"SLHF";
const FEATURES_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureFormat {
    #[default]
    Binary,
    Csv,
}

impl FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "slhf" => Ok(FeatureFormat::Binary),
            "csv" => Ok(FeatureFormat::Csv),
            other => Err(Error::invalid(format!("unknown feature format {other:?}"))),
        }
    }
}

pub fn load_features(path: &Path, format: FeatureFormat) -> Result<Matrix> {
    let bytes = read_file(path)?;
    match format {
        FeatureFormat::Binary => read_features_binary(&bytes),
        FeatureFormat::Csv => {
            let text = String::from_utf8(bytes)
                .map_err(|e| Error::Parse {
                    line: 0,
                    message: format!("not UTF-8: {e}"),
                })?;
            parse_features_csv(&text)
        }
    }
}

/// Writes `SLHF`. Values are narrowed to `f32`.
pub fn save_features(m: &Matrix, path: &Path) -> Result<()> {
    write_atomic(path, &write_features_binary(m)?)
}

pub fn write_features_binary(m: &Matrix) -> Result<Vec<u8>> {
    let (rows, cols) = m.shape();
    let rows32 = u32::try_from(rows).map_err(|_| Error::DimensionOverflow {
        rows: rows as u64,
        cols: cols as u64,
    })?;
    let cols32 = u32::try_from(cols).map_err(|_| Error::DimensionOverflow {
        rows: rows as u64,
        cols: cols as u64,
    })?;
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 4);
    out.extend_from_slice(&FEATURES_MAGIC);
    out.extend_from_slice(&FEATURES_VERSION.to_le_bytes());
    out.extend_from_slice(&rows32.to_le_bytes());
    out.extend_from_slice(&cols32.to_le_bytes());
    for i in 0..rows {
        for j in 0..cols {
            let v = m[(i, j)] as f32;
            if !v.is_finite() {
                return Err(Error::NonFinite("save_features"));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_features_binary(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != FEATURES_MAGIC {
        return Err(Error::BadMagic {
            expected: FEATURES_MAGIC,
            found: magic,
        });
    }
    let version = le_u32(&bytes[4..8]);
    if version != FEATURES_VERSION {
        return Err(Error::UnsupportedVersion {
            format: "SLHF",
            version,
        });
    }
    let rows = le_u32(&bytes[8..12]) as u64;
    let cols = le_u32(&bytes[12..16]) as u64;
    let payload = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .filter(|&p| p <= isize::MAX as u64)
        .ok_or(Error::DimensionOverflow { rows, cols })?;
    let body = &bytes[HEADER_LEN..];
    let found = body.len() as u64;
    if found < payload {
        return Err(Error::Truncated {
            expected: payload,
            found,
        });
    }
    if found > payload {
        return Err(Error::TrailingData {
            extra: found - payload,
        });
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut m = Matrix::zeros(rows, cols);
    for (idx, chunk) in body.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite("load_features"));
        }
        m[(idx / cols, idx % cols)] = v as f64;
    }
    Ok(m)
}

/// One sample per line, comma-separated values. Returns `dims x samples`.
pub fn parse_features_csv(text: &str) -> Result<Matrix> {
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (field, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                line: lineno + 1,
                field: field + 1,
                text: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric {
                    line: lineno + 1,
                    field: field + 1,
                    text: cell.to_string(),
                });
            }
            row.push(v);
        }
        if let Some(first) = samples.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("{} fields, expected {}", row.len(), first.len()),
                });
            }
        }
        samples.push(row);
    }
    let n = samples.len();
    let dims = samples.first().map_or(0, Vec::len);
    Ok(Matrix::from_fn(dims, n, |i, j| samples[j][i]))
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    parse_labels(&text)
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    let lines: Vec<&str> = text.split('\n').collect();
    let last = lines.len() - 1;
    for (i, line) in lines.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() && i == last {
            break;
        }
        let v = line.parse::<usize>().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("{line:?} is not a class id"),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        writeln!(s, "{l}").unwrap();
    }
    write_atomic(path, s.as_bytes())
}

pub(super) fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b[..4].try_into().unwrap())
}
