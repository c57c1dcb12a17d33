//! Compressed 4D look-up tables and expert banks.
//!
//! A table samples the 2x2-patch input space `[0,255]^4` on a uniform lattice
//! with step `interval` and stores an `r x r` output patch of absolute 8-bit
//! pixels at every lattice vertex. Values are laid out row-major in
//! `[b, b, b, b, r, r]` order with `b = 256 / interval + 1`; lattice index `i`
//! stands for input `min(i * interval, 255)`.

mod io;

pub use io::{decode_bank, encode_bank, load_bank, save_bank, save_experts, BANK_MAGIC, BANK_VERSION};

use crate::{Error, Result};

/// Checks that `interval` is a power of two dividing 256.
pub fn check_interval(interval: u32) -> Result<()> {
    if interval == 0 || !interval.is_power_of_two() || interval > 256 {
        return Err(Error::invalid(format!("interval must divide 256 (got {interval})")));
    }
    Ok(())
}

/// Lattice vertices per axis.
///
/// Interval 1 is the uncompressed table: every input is a vertex, so no
/// closing vertex past 255 is needed and the axis has 256 entries.
pub fn bins_for_interval(interval: u32) -> Result<usize> {
    check_interval(interval)?;
    Ok(if interval == 1 {
        256
    } else {
        256 / interval as usize + 1
    })
}

/// Payload bytes for `n` experts: `bins^4 * scale^2 * n`.
pub fn lut_size_bytes(interval: u32, scale: u32, n: u32) -> Result<u64> {
    let bins = bins_for_interval(interval)? as u64;
    if scale == 0 {
        return Err(Error::invalid("scale must be >= 1"));
    }
    if n == 0 {
        return Err(Error::invalid("expert count must be >= 1"));
    }
    let scale = u64::from(scale);
    Ok(bins.pow(4) * scale * scale * u64::from(n))
}

/// Input pixel value represented by lattice index `index`.
#[inline]
pub fn lattice_value(interval: u32, index: usize) -> u8 {
    (index * interval as usize).min(255) as u8
}

/// One compressed 4D LUT.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LutTable {
    interval: u32,
    shift: u32,
    bins: usize,
    scale: usize,
    strides: [usize; 4],
    values: Vec<u8>,
}

impl LutTable {
    /// Wraps a dense value array. Interval 1 (the uncompressed 256^4 table)
    /// is only meaningful for size accounting and is rejected here.
    pub fn new(interval: u32, scale: usize, values: Vec<u8>) -> Result<Self> {
        let bins = bins_for_interval(interval)?;
        if interval < 2 {
            return Err(Error::invalid(
                "interval 1 describes the uncompressed table, which cannot be materialized",
            ));
        }
        if scale == 0 {
            return Err(Error::invalid("scale must be >= 1"));
        }
        let patch = scale * scale;
        let expected = bins.pow(4) * patch;
        if values.len() != expected {
            return Err(Error::shape(format!(
                "LUT with {bins} bins and scale {scale} needs {expected} values, got {}",
                values.len()
            )));
        }
        let strides = [bins.pow(3) * patch, bins.pow(2) * patch, bins * patch, patch];
        Ok(Self {
            interval,
            shift: interval.trailing_zeros(),
            bins,
            scale,
            strides,
            values,
        })
    }

    /// Constant table, handy for tests and padding experts.
    pub fn constant(interval: u32, scale: usize, value: u8) -> Result<Self> {
        let bins = bins_for_interval(interval)?;
        Self::new(interval, scale, vec![value; bins.pow(4) * scale * scale])
    }

    #[inline]
    pub fn interval(&self) -> u32 {
        self.interval
    }

    /// log2 of the interval.
    #[inline]
    pub fn shift(&self) -> u32 {
        self.shift
    }

    #[inline]
    pub fn bins(&self) -> usize {
        self.bins
    }

    #[inline]
    pub fn scale(&self) -> usize {
        self.scale
    }

    /// Output samples per vertex (`scale^2`).
    #[inline]
    pub fn patch_len(&self) -> usize {
        self.scale * self.scale
    }

    #[inline]
    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [u8] {
        &mut self.values
    }

    /// Element strides of the four lattice axes (x, y, z, u).
    #[inline]
    pub fn strides(&self) -> [usize; 4] {
        self.strides
    }

    /// Offset of the first output sample of vertex `index`.
    #[inline]
    pub fn vertex_offset(&self, index: [usize; 4]) -> usize {
        index[0] * self.strides[0]
            + index[1] * self.strides[1]
            + index[2] * self.strides[2]
            + index[3] * self.strides[3]
    }

    /// Offset delta for each 4-bit corner mask (bit 3 = x ... bit 0 = u).
    pub fn corner_offsets(&self) -> [usize; 16] {
        let mut out = [0usize; 16];
        for (mask, o) in out.iter_mut().enumerate() {
            *o = (0..4)
                .filter(|&axis| mask & (8 >> axis) != 0)
                .map(|axis| self.strides[axis])
                .sum();
        }
        out
    }

    /// The `scale x scale` output patch stored at a lattice vertex.
    pub fn entry(&self, index: [usize; 4]) -> &[u8] {
        assert!(
            index.iter().all(|&i| i < self.bins),
            "lattice index {index:?} out of range for {} bins",
            self.bins
        );
        let o = self.vertex_offset(index);
        &self.values[o..o + self.patch_len()]
    }

    /// Same lattice and scale as `other`.
    pub fn same_geometry(&self, other: &LutTable) -> bool {
        self.interval == other.interval && self.bins == other.bins && self.scale == other.scale
    }
}

/// Expert LUTs built for increasing degradation labels (QP values).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpertBank {
    luts: Vec<LutTable>,
    labels: Vec<u32>,
}

impl ExpertBank {
    pub fn new(luts: Vec<LutTable>, labels: Vec<u32>) -> Result<Self> {
        let Some(first) = luts.first() else {
            return Err(Error::invalid("expert bank needs at least one LUT"));
        };
        if luts.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} LUTs but {} labels",
                luts.len(),
                labels.len()
            )));
        }
        if let Some(bad) = luts.iter().position(|l| !l.same_geometry(first)) {
            let l = &luts[bad];
            return Err(Error::invalid(format!(
                "expert {bad} has interval {} / scale {}, expected {} / {}",
                l.interval(),
                l.scale(),
                first.interval(),
                first.scale()
            )));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "labels must be strictly increasing: {labels:?}"
            )));
        }
        Ok(Self { luts, labels })
    }

    pub fn single(lut: LutTable, label: u32) -> Self {
        Self {
            luts: vec![lut],
            labels: vec![label],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.luts.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.luts.is_empty()
    }

    pub fn luts(&self) -> &[LutTable] {
        &self.luts
    }

    pub fn luts_mut(&mut self) -> &mut [LutTable] {
        &mut self.luts
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn interval(&self) -> u32 {
        self.luts[0].interval()
    }

    pub fn scale(&self) -> usize {
        self.luts[0].scale()
    }

    pub fn bins(&self) -> usize {
        self.luts[0].bins()
    }

    /// Bank restricted to expert `k`.
    pub fn expert(&self, k: usize) -> ExpertBank {
        ExpertBank::single(self.luts[k].clone(), self.labels[k])
    }

    /// Total value bytes across experts.
    pub fn payload_len(&self) -> usize {
        self.luts.iter().map(|l| l.values().len()).sum()
    }
}
