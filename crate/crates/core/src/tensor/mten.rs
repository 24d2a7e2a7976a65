//! `MTEN` binary tensor blocks.
//!
//! Layout: `b"MTEN"`, `u8` version (1), `u8` rank, `rank` little-endian `u64`
//! extents, then `product(extents)` little-endian `f64` values.

use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MTEN";
pub const VERSION: u8 = 1;
const FORMAT: &str = "MTEN";

pub fn write_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 8 * (t.rank() + t.len()));
    write_tensor(&mut out, t);
    out
}

/// Byte cursor shared by the binary formats in this crate.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], format: &'static str) -> Self {
        Reader { buf, pos: 0, format }
    }


    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::UnexpectedEof { format: self.format });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Malformed {
                format: self.format,
                reason: format!("bad magic, expected {:?}", String::from_utf8_lossy(magic)),
            });
        }
        Ok(())
    }
}

pub(crate) fn read_tensor(r: &mut Reader<'_>) -> Result<Tensor> {
    let fmt = r.format;
    r.format = FORMAT;
    let result = read_tensor_inner(r);
    r.format = fmt;
    result
}

fn read_tensor_inner(r: &mut Reader<'_>) -> Result<Tensor> {
    r.expect_magic(MAGIC)?;
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            format: FORMAT,
            found: version,
            expected: VERSION,
        });
    }
    let rank = r.u8()? as usize;
    if rank == 0 {
        return Err(Error::Malformed {
            format: FORMAT,
            reason: "rank 0".into(),
        });
    }
    let mut shape = Vec::with_capacity(rank);
    let mut len: usize = 1;
    for _ in 0..rank {
        let d = usize::try_from(r.u64()?).map_err(|_| Error::Malformed {
            format: FORMAT,
            reason: "extent overflows usize".into(),
        })?;
        len = len.checked_mul(d).ok_or_else(|| Error::Malformed {
            format: FORMAT,
            reason: "element count overflows".into(),
        })?;
        shape.push(d);
    }
    if len.checked_mul(8).is_none_or(|bytes| bytes > r.remaining()) {
        return Err(Error::UnexpectedEof { format: FORMAT });
    }
    let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    Tensor::new(&shape, data).map_err(|e| Error::Malformed {
        format: FORMAT,
        reason: e.to_string(),
    })
}

/// Decode exactly one tensor occupying the whole buffer.
pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes, FORMAT);
    let t = read_tensor(&mut r)?;
    if r.remaining() != 0 {
        return Err(Error::Malformed {
            format: FORMAT,
            reason: format!("{} trailing bytes", r.remaining()),
        });
    }
    Ok(t)
}

pub fn save(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_exact() {
        let t = Tensor::new(&[1, 2], vec![1.0, -0.5]).unwrap();
        let bytes = encode(&t);
        let mut expect = b"MTEN".to_vec();
        expect.extend_from_slice(&[1, 2]);
        expect.extend_from_slice(&1u64.to_le_bytes());
        expect.extend_from_slice(&2u64.to_le_bytes());
        expect.extend_from_slice(&1.0f64.to_le_bytes());
        expect.extend_from_slice(&(-0.5f64).to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn rejects_bad_input() {
        let t = Tensor::ones(&[3, 2]);
        let bytes = encode(&t);
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::UnexpectedEof { .. })));
        let mut v = bytes.clone();
        v[4] = 2;
        assert!(matches!(decode(&v), Err(Error::VersionMismatch { .. })));
        let mut v = bytes.clone();
        v[0] = b'X';
        assert!(matches!(decode(&v), Err(Error::Malformed { .. })));
        let mut v = bytes;
        v.push(0);
        assert!(decode(&v).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_bit_exact(shape in prop::collection::vec(1usize..5, 1..5), seed in any::<u64>()) {
            let len: usize = shape.iter().product();
            let data: Vec<f64> = (0..len)
                .map(|i| f64::from_bits(crate::rng::splitmix64(seed ^ i as u64) >> 2))
                .map(|v| if v.is_finite() { v } else { 0.0 })
                .collect();
            let t = Tensor::new(&shape, data).unwrap();
            let back = decode(&encode(&t)).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            let same = back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
