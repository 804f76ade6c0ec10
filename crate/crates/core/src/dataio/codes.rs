//! Bit-packed code files.
//!
//! ```text
//! b"SLHC" | u32 version = 1 | u32 L | u64 n | n * ceil(L/8) bytes
//! ```
//!
//! Bit `k` of a sample lives in byte `k / 8`, bit position `k % 8`
//! (LSB-first); `+1` is stored as 1 and padding bits are 0.

use std::path::Path;

use super::features::le_u32;
use super::{read_file, write_atomic, CodeMatrix};
use crate::error::{Error, Result};

pub const CODES_MAGIC: [u8; 4] = *b"SLHC";
const CODES_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn save_codes(codes: &CodeMatrix, path: &Path) -> Result<()> {
    write_atomic(path, &write_codes(codes)?)
}

pub fn load_codes(path: &Path) -> Result<CodeMatrix> {
    read_codes(&read_file(path)?)
}

pub fn write_codes(codes: &CodeMatrix) -> Result<Vec<u8>> {
    let l = codes.code_length();
    let n = codes.len();
    let l32 = u32::try_from(l)
        .map_err(|_| Error::invalid(format!("code length {l} does not fit in u32")))?;
    let per = l.div_ceil(8);
    let mut out = Vec::with_capacity(HEADER_LEN + per * n);
    out.extend_from_slice(&CODES_MAGIC);
    out.extend_from_slice(&CODES_VERSION.to_le_bytes());
    out.extend_from_slice(&l32.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for j in 0..n {
        let mut buf = vec![0u8; per];
        for k in 0..l {
            if codes.bit(k, j) {
                buf[k / 8] |= 1 << (k % 8);
            }
        }
        out.extend_from_slice(&buf);
    }
    Ok(out)
}

pub fn read_codes(bytes: &[u8]) -> Result<CodeMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != CODES_MAGIC {
        return Err(Error::BadMagic {
            expected: CODES_MAGIC,
            found: magic,
        });
    }
    let version = le_u32(&bytes[4..8]);
    if version != CODES_VERSION {
        return Err(Error::UnsupportedVersion {
            format: "SLHC",
            version,
        });
    }
    let l = le_u32(&bytes[8..12]) as u64;
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if l == 0 {
        return Err(Error::CorruptHeader("code length 0".into()));
    }
    let per = l.div_ceil(8);
    let payload = per
        .checked_mul(n)
        .filter(|&p| p <= isize::MAX as u64)
        .ok_or(Error::DimensionOverflow { rows: l, cols: n })?;
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
    let (l, n, per) = (l as usize, n as usize, per as usize);
    if l % 8 != 0 {
        let pad_mask = !((1u8 << (l % 8)) - 1);
        if body.chunks_exact(per).any(|c| c[per - 1] & pad_mask != 0) {
            return Err(Error::CorruptHeader("non-zero padding bits".into()));
        }
    }
    Ok(CodeMatrix::from_bits(l, n, |k, j| {
        body[j * per + k / 8] >> (k % 8) & 1 == 1
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::Matrix;

    #[test]
    fn single_code_byte() {
        let c = CodeMatrix::new(Matrix::from_column_slice(4, 1, &[1., -1., -1., 1.])).unwrap();
        let b = write_codes(&c).unwrap();
        assert_eq!(&b[..4], b"SLHC");
        assert_eq!(&b[20..], &[0b0000_1001]);
        assert_eq!(read_codes(&b).unwrap(), c);
    }

    #[test]
    fn eight_bit_codes_take_n_bytes() {
        let c = CodeMatrix::from_bits(8, 13, |k, j| (k * 7 + j) % 3 == 0);
        let b = write_codes(&c).unwrap();
        assert_eq!(b.len() - 20, 13);
        assert_eq!(read_codes(&b).unwrap(), c);
    }

    #[test]
    fn header_errors() {
        let c = CodeMatrix::from_bits(4, 2, |k, _| k == 0);
        let good = write_codes(&c).unwrap();
        let mut bad = good.clone();
        bad[1] = b'X';
        assert!(matches!(read_codes(&bad), Err(Error::BadMagic { .. })));
        assert!(matches!(read_codes(&good[..21]), Err(Error::Truncated { .. })));
        let mut bad = good.clone();
        bad[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(read_codes(&bad), Err(Error::CorruptHeader(_))));
        let mut bad = good.clone();
        bad[20] |= 0x80;
        assert!(matches!(read_codes(&bad), Err(Error::CorruptHeader(_))));
    }
}
