//! The `L3DP` binary path format.
//!
//! Layout: `"L3DP"`, version `0x01`, scale (1 byte), start site (three
//! little-endian `i64`), step count (little-endian `u64`), then one byte per
//! step holding the direction code in `0..6`.

use crate::error::{Error, Result};
use crate::geometry::LatticePoint;
use crate::walk::LatticePath;

pub const MAGIC: &[u8; 4] = b"L3DP";
pub const VERSION: u8 = 0x01;
const HEADER: usize = 4 + 1 + 1 + 24 + 8;

pub fn encode_path(path: &LatticePath) -> Vec<u8> {
    let steps = path.steps();
    let mut out = Vec::with_capacity(HEADER + steps.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(path.scale());
    for c in path.at(0) {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out.extend_from_slice(&(steps.len() as u64).to_le_bytes());
    out.extend_from_slice(&steps);
    out
}

fn decode_err<T>(offset: usize, reason: impl Into<String>) -> Result<T> {
    Err(Error::Decode { offset, reason: reason.into() })
}

fn take<const N: usize>(bytes: &[u8], at: usize) -> Result<[u8; N]> {
    match bytes.get(at..at + N) {
        Some(b) => Ok(b.try_into().expect("slice has length N")),
        None => decode_err(bytes.len(), format!("truncated: need {} bytes at offset {at}", N)),
    }
}

pub fn decode_path(bytes: &[u8]) -> Result<LatticePath> {
    let magic: [u8; 4] = take(bytes, 0)?;
    if &magic != MAGIC {
        return decode_err(0, "bad magic");
    }
    let [version] = take::<1>(bytes, 4)?;
    if version != VERSION {
        return decode_err(4, format!("unsupported version {version:#04x}"));
    }
    let [scale] = take::<1>(bytes, 5)?;
    let mut start = [0i64; 3];
    for (k, c) in start.iter_mut().enumerate() {
        *c = i64::from_le_bytes(take(bytes, 6 + 8 * k)?);
    }
    let count = u64::from_le_bytes(take(bytes, 30)?);
    let body = &bytes[HEADER..];
    if (body.len() as u64) < count {
        return decode_err(bytes.len(), format!("truncated: {count} steps declared, {} present", body.len()));
    }
    if body.len() as u64 > count {
        return decode_err(HEADER + count as usize, "trailing bytes after the last step");
    }
    if let Some(i) = body.iter().position(|&b| b > 5) {
        return decode_err(HEADER + i, format!("invalid step code {}", body[i]));
    }
    LatticePath::from_steps(LatticePoint::new(start, scale), body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LatticePath {
        LatticePath::from_steps(LatticePoint::new([3, -2, 1 << 40], 7), &[0, 2, 4, 1, 1, 5, 3]).unwrap()
    }

    #[test]
    fn roundtrip() {
        let p = sample();
        let b = encode_path(&p);
        assert_eq!(b.len(), HEADER + 7);
        assert_eq!(&b[..4], b"L3DP");
        assert_eq!(decode_path(&b).unwrap(), p);
        assert_eq!(encode_path(&decode_path(&b).unwrap()), b);
        let t = LatticePath::trivial(LatticePoint::origin(0));
        assert_eq!(decode_path(&encode_path(&t)).unwrap(), t);
    }

    #[test]
    fn bad_step_code_reports_offset() {
        let mut b = encode_path(&sample());
        b[HEADER + 3] = 7;
        assert_eq!(
            decode_path(&b),
            Err(Error::Decode { offset: HEADER + 3, reason: "invalid step code 7".into() })
        );
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let b = encode_path(&sample());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode_path(&bad), Err(Error::Decode { offset: 0, .. })));
        for cut in [0, 3, 5, 20, HEADER, b.len() - 1] {
            assert!(matches!(decode_path(&b[..cut]), Err(Error::Decode { .. })), "cut at {cut}");
        }
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(decode_path(&long), Err(Error::Decode { .. })));
    }
}
