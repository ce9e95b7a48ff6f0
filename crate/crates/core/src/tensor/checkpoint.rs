//! Binary container of named arrays.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "STANCKPT"
//! version  u32      currently 1
//! count    u32
//! count times:
//!   name_len u32, name UTF-8 bytes
//!   rank     u32, dims u64 * rank
//!   values   f64 * product(dims)
//! ```

use alloc::string::String;
use alloc::vec::Vec;

use super::{Tensor, TensorError};

pub const MAGIC: &[u8; 8] = b"STANCKPT";
pub const VERSION: u32 = 1;

pub fn encode<'a, I>(arrays: I) -> Vec<u8>
where
    I: IntoIterator<Item = (&'a str, &'a Tensor)>,
{
    let arrays: Vec<_> = arrays.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, t) in arrays {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(TensorError::Checkpoint("truncated input"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TensorError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>, TensorError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(TensorError::Checkpoint("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(TensorError::CheckpointVersion(version));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = core::str::from_utf8(r.take(name_len)?)
            .map_err(|_| TensorError::Checkpoint("array name is not UTF-8"))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(TensorError::Checkpoint("array size overflows"))?;
        let raw = r.take(len.checked_mul(8).ok_or(TensorError::Checkpoint("array size overflows"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((String::from(name), Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(TensorError::Checkpoint("trailing bytes after last array"));
    }
    Ok(out)
}
