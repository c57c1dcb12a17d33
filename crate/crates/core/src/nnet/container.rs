//! Weight container: `LSRW` magic, u32 version, u32 tensor count, then per
//! tensor a u32 name length, UTF-8 name, u32 rank, u32 dims and the
//! little-endian f32 payload. All integers little-endian.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"LSRW";
pub const WEIGHTS_VERSION: u32 = 1;

const MAX_RANK: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn scalar(name: impl Into<String>, v: f32) -> Self {
        Self::new(name, vec![1], vec![v])
    }
}

pub fn encode_tensors(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&u32_of(tensors.len(), "tensor count")?.to_le_bytes());
    for t in tensors {
        let len: usize = t.shape.iter().product();
        if len != t.data.len() {
            return Err(Error::shape(format!(
                "{}: shape {:?} needs {len} values, has {}",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
        if t.shape.len() > MAX_RANK {
            return Err(Error::invalid(format!("{}: rank above {MAX_RANK}", t.name)));
        }
        out.extend_from_slice(&u32_of(t.name.len(), "name length")?.to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&u32_of(d, "dimension")?.to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::format(0, "not a weight container (bad magic)"));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let at = r.pos as u64;
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::format(at + 4, "tensor name is not UTF-8"))?
            .to_owned();
        let rank_at = r.pos as u64;
        let rank = r.u32()? as usize;
        if rank > MAX_RANK {
            return Err(Error::format(rank_at, format!("rank {rank} above {MAX_RANK}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::format(rank_at, "tensor size overflows"))?;
        let payload_at = r.pos as u64;
        let bytes = r.take(
            len.checked_mul(4)
                .ok_or_else(|| Error::format(payload_at, "tensor size overflows"))?,
        )?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect::<Vec<_>>();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                payload_at + 4 * i as u64,
                format!("{name}: non-finite value"),
            ));
        }
        out.push(NamedTensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after last tensor"));
    }
    Ok(out)
}

pub fn save_tensors(path: impl AsRef<Path>, tensors: &[NamedTensor]) -> Result<()> {
    fs::write(path, encode_tensors(tensors)?)?;
    Ok(())
}

pub fn load_tensors(path: impl AsRef<Path>) -> Result<Vec<NamedTensor>> {
    decode_tensors(&fs::read(path)?)
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::invalid(format!("{what} {v} does not fit in u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.pos as u64, "unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
