//! LUT query paths.
//!
//! Three interpolators share the same lattice addressing:
//!
//! - [`tetra_interp_reference`]: the 24-case tetrahedral control flow written
//!   out as an if/else chain. Slow and branchy; it is the correctness oracle.
//! - [`tetra_interp_fast`]: the same simplex interpolation driven by a
//!   precomputed [`OrderTable`], no data-dependent branches.
//! - [`tetralinear_interp`]: 16-vertex multilinear baseline.
//!
//! All three are integer-only and round half away from zero.

mod fast;
mod order;
mod probe;
mod reference;
mod tetralinear;

pub use fast::{tetra_interp_fast, tetra_interp_fast_into, FastLut};
pub use order::{OrderEntry, OrderTable, MAX_ORDER_INTERVAL};
pub use probe::{NoProbe, OpCounts, OpProbe};
pub use reference::{
    reference_sums, select_case, tetra_interp_reference, tetra_interp_reference_into, TetraCase, CASE_COUNT,
};
pub use tetralinear::{tetralinear_interp, tetralinear_interp_into};

use crate::lut::check_interval;
use crate::{Error, Result};

/// Corner mask bits, read left to right as in `P_xyzu`.
pub const AXIS_BITS: [u8; 4] = [0b1000, 0b0100, 0b0010, 0b0001];

/// Lattice cell (high part) and in-cell offset (low part) of a 4-pixel input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MsbLsb {
    pub msb: [u32; 4],
    pub lsb: [u32; 4],
}

impl MsbLsb {
    /// Flat index of the LSB tuple in an order table for interval `1 << shift`.
    #[inline]
    pub fn lsb_index(&self, shift: u32) -> usize {
        ((self.lsb[0] << (3 * shift)) | (self.lsb[1] << (2 * shift)) | (self.lsb[2] << shift) | self.lsb[3]) as usize
    }

    /// Lattice index of the cell corner selected by `mask`.
    #[inline]
    pub fn corner(&self, mask: u8) -> [usize; 4] {
        let mut idx = [0usize; 4];
        for axis in 0..4 {
            idx[axis] = self.msb[axis] as usize + usize::from(mask & AXIS_BITS[axis] != 0);
        }
        idx
    }
}

#[inline]
pub(crate) fn split_with_shift(px: [u8; 4], shift: u32) -> MsbLsb {
    let mask = (1u32 << shift) - 1;
    let mut out = MsbLsb {
        msb: [0; 4],
        lsb: [0; 4],
    };
    for i in 0..4 {
        let v = u32::from(px[i]);
        out.msb[i] = v >> shift;
        out.lsb[i] = v & mask;
    }
    out
}

/// Splits four pixels into lattice index `v / s` and remainder `v - H*s`.
pub fn split_msb_lsb(px: [u8; 4], interval: u32) -> Result<MsbLsb> {
    check_interval(interval)?;
    Ok(split_with_shift(px, interval.trailing_zeros()))
}

/// Barycentric weights of the five simplex vertices, scaled by the interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimplexWeights(pub [u32; 5]);

impl SimplexWeights {
    pub fn sum(&self) -> u32 {
        self.0.iter().sum()
    }
}

/// Weights from sorted LSBs: `s - L'x, L'x - L'y, L'y - L'z, L'z - L'u, L'u`.
pub fn simplex_weights(sorted: [u32; 4], interval: u32) -> Result<SimplexWeights> {
    if sorted.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid(format!("LSBs {sorted:?} are not sorted descending")));
    }
    if sorted[0] >= interval {
        return Err(Error::invalid(format!("LSB {} outside [0, {interval})", sorted[0])));
    }
    Ok(weights_unchecked(sorted, interval))
}

#[inline]
pub(crate) fn weights_unchecked(sorted: [u32; 4], interval: u32) -> SimplexWeights {
    SimplexWeights([
        interval - sorted[0],
        sorted[0] - sorted[1],
        sorted[1] - sorted[2],
        sorted[2] - sorted[3],
        sorted[3],
    ])
}

/// `round(sum / divisor)` for non-negative sums, ties away from zero, clamped to 8 bits.
#[inline]
pub(crate) fn round_div_u8(sum: u64, divisor: u64) -> u8 {
    ((sum + divisor / 2) / divisor).min(255) as u8
}
