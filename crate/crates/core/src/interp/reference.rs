//! Literal 24-case tetrahedral interpolation.
//!
//! Each case names a strict ordering of the four LSBs, the simplex walk from
//! corner 0000 to 1111 that ordering implies, and the weights
//! `(s - a, a - b, b - c, c - d, d)` of the ordered values. Equal LSBs are
//! ordered by axis priority u > z > y > x, so an all-equal tuple lands in the
//! final `else` case and every tie still selects a simplex consistent with the
//! non-increasing order (the tied weight is then zero).

use super::probe::{NoProbe, OpProbe};
use super::{round_div_u8, split_with_shift, weights_unchecked, MsbLsb, SimplexWeights};
use crate::lut::LutTable;

pub const CASE_COUNT: usize = 24;

/// The selected row of the control-flow table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TetraCase {
    /// Row number, 0-based; 23 is the `else` row.
    pub row: usize,
    /// LSBs in the row's order (non-increasing).
    pub sorted: [u32; 4],
    /// Corner masks of the three interior simplex vertices O2, O3, O4.
    pub corners: [u8; 3],
}

impl TetraCase {
    pub fn weights(&self, interval: u32) -> SimplexWeights {
        weights_unchecked(self.sorted, interval)
    }

    /// All five corner masks, O1 = 0000 through O5 = 1111.
    pub fn vertices(&self) -> [u8; 5] {
        [0b0000, self.corners[0], self.corners[1], self.corners[2], 0b1111]
    }
}

/// Runs the 24-way if/else chain on an LSB tuple.
pub fn select_case<P: OpProbe>(lsb: [u32; 4], probe: &mut P) -> TetraCase {
    let [lx, ly, lz, lu] = lsb;
    // Comparison keys: value first, then axis priority x < y < z < u.
    let (x, y, z, u) = (lx * 4, ly * 4 + 1, lz * 4 + 2, lu * 4 + 3);
    let mut gt = |a: u32, b: u32| {
        probe.branch();
        a > b
    };
    let row = |row, sorted, corners| TetraCase { row, sorted, corners };

    if gt(x, y) && gt(y, z) && gt(z, u) {
        row(0, [lx, ly, lz, lu], [0b1000, 0b1100, 0b1110])
    } else if gt(x, y) && gt(y, u) && gt(u, z) {
        row(1, [lx, ly, lu, lz], [0b1000, 0b1100, 0b1101])
    } else if gt(x, u) && gt(u, y) && gt(y, z) {
        row(2, [lx, lu, ly, lz], [0b1000, 0b1001, 0b1101])
    } else if gt(u, x) && gt(x, y) && gt(y, z) {
        row(3, [lu, lx, ly, lz], [0b0001, 0b1001, 0b1101])
    } else if gt(x, z) && gt(z, y) && gt(y, u) {
        row(4, [lx, lz, ly, lu], [0b1000, 0b1010, 0b1110])
    } else if gt(x, z) && gt(z, u) && gt(u, y) {
        row(5, [lx, lz, lu, ly], [0b1000, 0b1010, 0b1011])
    } else if gt(x, u) && gt(u, z) && gt(z, y) {
        row(6, [lx, lu, lz, ly], [0b1000, 0b1001, 0b1011])
    } else if gt(u, x) && gt(x, z) && gt(z, y) {
        row(7, [lu, lx, lz, ly], [0b0001, 0b1001, 0b1011])
    } else if gt(z, x) && gt(x, y) && gt(y, u) {
        row(8, [lz, lx, ly, lu], [0b0010, 0b1010, 0b1110])
    } else if gt(z, x) && gt(x, u) && gt(u, y) {
        row(9, [lz, lx, lu, ly], [0b0010, 0b1010, 0b1011])
    } else if gt(z, u) && gt(u, x) && gt(x, y) {
        row(10, [lz, lu, lx, ly], [0b0010, 0b0011, 0b1011])
    } else if gt(u, z) && gt(z, x) && gt(x, y) {
        row(11, [lu, lz, lx, ly], [0b0001, 0b0011, 0b1011])
    } else if gt(y, x) && gt(x, z) && gt(z, u) {
        row(12, [ly, lx, lz, lu], [0b0100, 0b1100, 0b1110])
    } else if gt(y, x) && gt(x, u) && gt(u, z) {
        row(13, [ly, lx, lu, lz], [0b0100, 0b1100, 0b1101])
    } else if gt(y, u) && gt(u, x) && gt(x, z) {
        row(14, [ly, lu, lx, lz], [0b0100, 0b0101, 0b1101])
    } else if gt(u, y) && gt(y, x) && gt(x, z) {
        row(15, [lu, ly, lx, lz], [0b0001, 0b0101, 0b1101])
    } else if gt(y, z) && gt(z, x) && gt(x, u) {
        row(16, [ly, lz, lx, lu], [0b0100, 0b0110, 0b1110])
    } else if gt(y, z) && gt(z, u) && gt(u, x) {
        row(17, [ly, lz, lu, lx], [0b0100, 0b0110, 0b0111])
    } else if gt(y, u) && gt(u, z) && gt(z, x) {
        row(18, [ly, lu, lz, lx], [0b0100, 0b0101, 0b0111])
    } else if gt(u, y) && gt(y, z) && gt(z, x) {
        row(19, [lu, ly, lz, lx], [0b0001, 0b0101, 0b0111])
    } else if gt(z, y) && gt(y, x) && gt(x, u) {
        row(20, [lz, ly, lx, lu], [0b0010, 0b0110, 0b1110])
    } else if gt(z, y) && gt(y, u) && gt(u, x) {
        row(21, [lz, ly, lu, lx], [0b0010, 0b0110, 0b0111])
    } else if gt(z, u) && gt(u, y) && gt(y, x) {
        row(22, [lz, lu, ly, lx], [0b0010, 0b0011, 0b0111])
    } else {
        row(23, [lu, lz, ly, lx], [0b0001, 0b0011, 0b0111])
    }
}

/// Unrounded interpolation sums `sum_i w_i * O_i` per output sample
/// (divide by the interval for the interpolated value).
pub fn reference_sums<P: OpProbe>(lut: &LutTable, px: [u8; 4], probe: &mut P) -> Vec<u32> {
    let split: MsbLsb = split_with_shift(px, lut.shift());
    let case = select_case(split.lsb, probe);
    let w = case.weights(lut.interval());
    let vertices = case.vertices();
    (0..lut.patch_len())
        .map(|sub| {
            let mut acc = 0u32;
            for (wi, &mask) in w.0.iter().zip(&vertices) {
                probe.fetch();
                probe.mul();
                acc += wi * u32::from(lut.entry(split.corner(mask))[sub]);
            }
            acc
        })
        .collect()
}

pub fn tetra_interp_reference_into<P: OpProbe>(lut: &LutTable, px: [u8; 4], out: &mut [u8], probe: &mut P) {
    let sums = reference_sums(lut, px, probe);
    let s = u64::from(lut.interval());
    for (o, sum) in out.iter_mut().zip(sums) {
        *o = round_div_u8(u64::from(sum), s);
    }
}

/// Reference tetrahedral query: the `r x r` output patch for input `(x, y, z, u)`.
pub fn tetra_interp_reference(lut: &LutTable, px: [u8; 4]) -> Vec<u8> {
    let mut out = vec![0; lut.patch_len()];
    tetra_interp_reference_into(lut, px, &mut out, &mut NoProbe);
    out
}
