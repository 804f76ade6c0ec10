//! The `SLHM` model container: a flag word plus named `f64` matrices.
//!
//! ```text
//! b"SLHM" | u32 version = 1 | u32 flags | u32 entry count
//! entry: u16 name length | name (UTF-8) | u32 rows | u32 cols | rows*cols f64, row-major
//! ```
//!
//! Entries are written in name order so identical models produce identical
//! bytes; readers look entries up by name and ignore their order. Scalars are
//! stored as 1 x 1 entries.

use std::collections::BTreeMap;
use std::path::Path;

use super::features::le_u32;
use super::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::matrixkit::Matrix;

pub const MODEL_MAGIC: [u8; 4] = *b"SLHM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelFile {
    pub flags: u32,
    entries: BTreeMap<String, Matrix>,
}

impl ModelFile {
    pub fn new(flags: u32) -> Self {
        ModelFile {
            flags,
            entries: BTreeMap::new(),
        }
    }

    pub fn put(&mut self, name: &str, m: Matrix) {
        self.entries.insert(name.to_string(), m);
    }

    pub fn put_scalar(&mut self, name: &str, v: f64) {
        self.put(name, Matrix::from_element(1, 1, v));
    }

    pub fn put_indices(&mut self, name: &str, idx: &[usize]) {
        self.put(
            name,
            Matrix::from_iterator(1, idx.len(), idx.iter().map(|&i| i as f64)),
        );
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingEntry(name.to_string()))
    }

    pub fn take(&mut self, name: &str) -> Result<Matrix> {
        self.entries
            .remove(name)
            .ok_or_else(|| Error::MissingEntry(name.to_string()))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let m = self.get(name)?;
        if m.shape() != (1, 1) {
            return Err(Error::CorruptHeader(format!("{name} is not a scalar")));
        }
        Ok(m[(0, 0)])
    }

    pub fn count(&self, name: &str) -> Result<usize> {
        let v = self.scalar(name)?;
        as_count(v).ok_or_else(|| Error::CorruptHeader(format!("{name} = {v} is not a count")))
    }

    pub fn indices(&self, name: &str) -> Result<Vec<usize>> {
        self.get(name)?
            .iter()
            .map(|&v| {
                as_count(v)
                    .ok_or_else(|| Error::CorruptHeader(format!("{name} holds non-index {v}")))
            })
            .collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, m) in &self.entries {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::invalid(format!("entry name too long: {name}")))?;
            let (rows, cols) = m.shape();
            let overflow = || Error::DimensionOverflow {
                rows: rows as u64,
                cols: cols as u64,
            };
            let rows32 = u32::try_from(rows).map_err(|_| overflow())?;
            let cols32 = u32::try_from(cols).map_err(|_| overflow())?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&rows32.to_le_bytes());
            out.extend_from_slice(&cols32.to_le_bytes());
            for i in 0..rows {
                for j in 0..cols {
                    out.extend_from_slice(&m[(i, j)].to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if magic != MODEL_MAGIC {
            return Err(Error::BadMagic {
                expected: MODEL_MAGIC,
                found: magic,
            });
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion {
                format: "SLHM",
                version,
            });
        }
        let flags = r.u32()?;
        let count = r.u32()?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::CorruptHeader("entry name is not UTF-8".into()))?
                .to_string();
            let rows = r.u32()? as u64;
            let cols = r.u32()? as u64;
            let len = rows
                .checked_mul(cols)
                .and_then(|c| c.checked_mul(8))
                .filter(|&p| p <= isize::MAX as u64)
                .ok_or(Error::DimensionOverflow { rows, cols })?;
            let body = r.take(len as usize)?;
            let (rows, cols) = (rows as usize, cols as usize);
            let mut m = Matrix::zeros(rows, cols);
            for (idx, chunk) in body.chunks_exact(8).enumerate() {
                let v = f64::from_le_bytes(chunk.try_into().unwrap());
                if !v.is_finite() {
                    return Err(Error::NonFinite("model entry"));
                }
                m[(idx / cols, idx % cols)] = v;
            }
            if entries.insert(name.clone(), m).is_some() {
                return Err(Error::CorruptHeader(format!("duplicate entry {name:?}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::TrailingData {
                extra: (bytes.len() - r.pos) as u64,
            });
        }
        Ok(ModelFile { flags, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

fn as_count(v: f64) -> Option<usize> {
    (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as usize)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                expected: (self.pos as u64).saturating_add(len as u64),
                found: self.bytes.len() as u64,
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(le_u32(self.take(4)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_order_independence() {
        let mut f = ModelFile::new(1);
        f.put("zeta", Matrix::from_row_slice(2, 2, &[1., 2., 3., 4.]));
        f.put_scalar("alpha", 0.1);
        f.put_indices("sel", &[3, 0, 7]);
        let b = f.to_bytes().unwrap();
        let g = ModelFile::from_bytes(&b).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.indices("sel").unwrap(), vec![3, 0, 7]);
        assert_eq!(g.scalar("alpha").unwrap(), 0.1);
        assert!(matches!(g.get("nope"), Err(Error::MissingEntry(_))));
        assert_eq!(g.names().collect::<Vec<_>>(), vec!["alpha", "sel", "zeta"]);
    }

    #[test]
    fn corrupt_inputs() {
        let mut f = ModelFile::new(0);
        f.put_scalar("x", 1.0);
        let b = f.to_bytes().unwrap();
        assert!(matches!(
            ModelFile::from_bytes(&b[..b.len() - 2]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = b.clone();
        bad[0] = 0;
        assert!(matches!(ModelFile::from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut bad = b.clone();
        bad.push(9);
        assert!(matches!(ModelFile::from_bytes(&bad), Err(Error::TrailingData { .. })));
    }
}
