//! Binary expert-bank container.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "LSRB"
//! 4       4           version (u32, = 1)
//! 8       4           interval
//! 12      4           bins (= 256/interval + 1)
//! 16      4           scale r
//! 20      4           expert count n
//! 24      4n          QP labels (u32, strictly increasing)
//! 24+4n   n*b^4*r^2   values, expert-major, each [b,b,b,b,r,r] row-major
//! ```
//! All integers little-endian.

use std::fs;
use std::path::Path;

use super::{bins_for_interval, check_interval, ExpertBank, LutTable};
use crate::{Error, Result};

pub const BANK_MAGIC: [u8; 4] = *b"LSRB";
pub const BANK_VERSION: u32 = 1;

const FIXED_HEADER: usize = 24;

pub fn encode_bank(bank: &ExpertBank) -> Vec<u8> {
    let n = bank.len();
    let mut out = Vec::with_capacity(FIXED_HEADER + 4 * n + bank.payload_len());
    out.extend_from_slice(&BANK_MAGIC);
    for v in [
        BANK_VERSION,
        bank.interval(),
        bank.bins() as u32,
        bank.scale() as u32,
        n as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &label in bank.labels() {
        out.extend_from_slice(&label.to_le_bytes());
    }
    for lut in bank.luts() {
        out.extend_from_slice(lut.values());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let Some(raw) = self.bytes.get(self.pos..end) else {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated header while reading {what}"),
            ));
        };
        self.pos = end;
        Ok(u32::from_le_bytes(raw.try_into().unwrap()))
    }
}

pub fn decode_bank(bytes: &[u8]) -> Result<ExpertBank> {
    if bytes.len() < 4 {
        return Err(Error::format(0, "truncated header while reading magic"));
    }
    if bytes[..4] != BANK_MAGIC {
        return Err(Error::format(0, format!("bad magic {:02x?}", &bytes[..4])));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32("version")?;
    if version != BANK_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let interval = r.u32("interval")?;
    if check_interval(interval).is_err() || interval < 2 {
        return Err(Error::format(8, format!("invalid interval {interval}")));
    }
    let bins = r.u32("bins")? as usize;
    let expected_bins = bins_for_interval(interval)?;
    if bins != expected_bins {
        return Err(Error::format(
            12,
            format!("bins {bins} inconsistent with interval {interval} (expected {expected_bins})"),
        ));
    }
    let scale = r.u32("scale")? as usize;
    if scale == 0 {
        return Err(Error::format(16, "scale must be >= 1"));
    }
    let n = r.u32("expert count")? as usize;
    if n == 0 {
        return Err(Error::format(20, "expert count must be >= 1"));
    }
    let mut labels = Vec::with_capacity(n.min(1024));
    for k in 0..n {
        let at = r.pos;
        let label = r.u32("labels")?;
        if k > 0 && label <= labels[k - 1] {
            return Err(Error::format(
                at as u64,
                format!("label {label} not greater than previous {}", labels[k - 1]),
            ));
        }
        labels.push(label);
    }
    let per_expert = bins.pow(4) * scale * scale;
    let payload = &bytes[r.pos..];
    if payload.len() != per_expert * n {
        return Err(Error::format(
            r.pos as u64,
            format!(
                "payload is {} bytes, header implies {n} x {per_expert} = {}",
                payload.len(),
                per_expert * n
            ),
        ));
    }
    let luts = payload
        .chunks_exact(per_expert)
        .map(|chunk| LutTable::new(interval, scale, chunk.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    ExpertBank::new(luts, labels)
}

/// Validates the experts as a bank and writes it.
pub fn save_experts(luts: Vec<LutTable>, labels: Vec<u32>, path: impl AsRef<Path>) -> Result<()> {
    let bank = ExpertBank::new(luts, labels)?;
    save_bank(&bank, path)
}

pub fn save_bank(bank: &ExpertBank, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_bank(bank))?;
    Ok(())
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<ExpertBank> {
    decode_bank(&fs::read(path)?)
}
