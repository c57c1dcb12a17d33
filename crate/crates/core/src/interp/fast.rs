//! Order-table tetrahedral interpolation.

use rayon::prelude::*;

use super::order::{OrderTable, AXIS_ORDERS};
use super::probe::{NoProbe, OpProbe};
use super::split_with_shift;
use crate::lut::LutTable;
use crate::plane::Plane;
use crate::{Error, Result};

/// A LUT paired with its order table and per-mask vertex offsets.
#[derive(Clone, Copy, Debug)]
pub struct FastLut<'a> {
    lut: &'a LutTable,
    table: &'a OrderTable,
    corners: [usize; 16],
    /// Offsets of the three inner simplex vertices for each axis order.
    steps: [[usize; 3]; 24],
}

impl<'a> FastLut<'a> {
    pub fn new(lut: &'a LutTable, table: &'a OrderTable) -> Result<Self> {
        if lut.interval() != table.interval() {
            return Err(Error::invalid(format!(
                "order table built for interval {} but LUT uses {}",
                table.interval(),
                lut.interval()
            )));
        }
        let corners = lut.corner_offsets();
        let steps = AXIS_ORDERS.map(|[a, b, c, _]| {
            let m1 = 0b1000 >> a;
            let m2 = m1 | 0b1000 >> b;
            [corners[m1], corners[m2], corners[m2 | 0b1000 >> c]]
        });
        Ok(Self {
            lut,
            table,
            corners,
            steps,
        })
    }

    #[inline]
    pub fn lut(&self) -> &'a LutTable {
        self.lut
    }

    /// Value offsets of the five simplex vertices and their weights.
    #[inline]
    pub fn simplex(&self, px: [u8; 4]) -> ([usize; 5], [u32; 5]) {
        let shift = self.lut.shift();
        let split = split_with_shift(px, shift);
        let base = self.lut.vertex_offset(split.msb.map(|h| h as usize));
        let order = self.table.orders()[split.lsb_index(shift)] as usize;
        let [a, b, c, d] = AXIS_ORDERS[order].map(|axis| split.lsb[axis as usize]);
        let weights = [self.lut.interval() - a, a - b, b - c, c - d, d];
        let step = &self.steps[order];
        let offsets = [
            base,
            base + step[0],
            base + step[1],
            base + step[2],
            base + self.corners[15],
        ];
        (offsets, weights)
    }

    /// Upscales a whole plane. Each LR pixel queries its 2x2 window, clamped
    /// at the right and bottom edges; rows run in parallel.
    pub fn upscale(&self, lr: &Plane<u8>) -> Result<Plane<u8>> {
        if lr.is_empty() {
            return Err(Error::invalid("empty frame"));
        }
        let r = self.lut.scale();
        let rr = r * r;
        let (w, h) = (lr.width(), lr.height());
        let hw = w * r;
        let mut out = vec![0u8; hw * h * r];
        out.par_chunks_mut(hw * r).enumerate().for_each(|(y, rows)| {
            let top = lr.row(y);
            let bottom = lr.row((y + 1).min(h - 1));
            let patch = |x: usize| {
                let x1 = (x + 1).min(w - 1);
                [top[x], top[x1], bottom[x], bottom[x1]]
            };
            if rr == LANES {
                let k = Kernel4::new(self);
                let (r0, rest) = rows.split_at_mut(hw);
                let (r1, rest) = rest.split_at_mut(hw);
                let (r2, r3) = rest.split_at_mut(hw);
                for x in 0..w {
                    let tile = k.tile(patch(x));
                    let at = 4 * x..4 * x + 4;
                    r0[at.clone()].copy_from_slice(&tile[0..4]);
                    r1[at.clone()].copy_from_slice(&tile[4..8]);
                    r2[at.clone()].copy_from_slice(&tile[8..12]);
                    r3[at].copy_from_slice(&tile[12..16]);
                }
            } else {
                let mut tile = vec![0u8; rr];
                for x in 0..w {
                    self.query_into(patch(x), &mut tile, &mut NoProbe);
                    for i in 0..r {
                        rows[i * hw + x * r..i * hw + (x + 1) * r].copy_from_slice(&tile[i * r..(i + 1) * r]);
                    }
                }
            }
        });
        Plane::new(hw, h * r, out)
    }

    /// Writes the `r x r` patch for `px` into `out`.
    #[inline]
    pub fn query_into<P: OpProbe>(&self, px: [u8; 4], out: &mut [u8], probe: &mut P) {
        let (o, w) = self.simplex(px);
        let rr = self.lut.patch_len();
        let v = self.lut.values();
        let (p0, p1, p2, p3, p4) = (
            &v[o[0]..o[0] + rr],
            &v[o[1]..o[1] + rr],
            &v[o[2]..o[2] + rr],
            &v[o[3]..o[3] + rr],
            &v[o[4]..o[4] + rr],
        );
        let shift = self.lut.shift();
        let half = (1u32 << shift) >> 1;
        for _ in 0..5 * rr {
            probe.fetch();
            probe.mul();
        }
        let out = &mut out[..rr];
        let mut i = 0;
        while i + LANES <= rr {
            let dst: &mut [u8; LANES] = (&mut out[i..i + LANES]).try_into().unwrap();
            blend_lanes(
                [p0, p1, p2, p3, p4].map(|p| lane(p, i)),
                w.map(|x| x as u16),
                half as u16,
                shift,
                dst,
            );
            i += LANES;
        }
        for j in i..rr {
            let acc = w[0] * u32::from(p0[j])
                + w[1] * u32::from(p1[j])
                + w[2] * u32::from(p2[j])
                + w[3] * u32::from(p3[j])
                + w[4] * u32::from(p4[j]);
            out[j] = ((acc + half) >> shift).min(255) as u8;
        }
    }
}

const LANES: usize = 16;

/// Everything the scale-4 row loop needs, copied out of the tables so it
/// stays in registers.
struct Kernel4<'a> {
    values: &'a [u8],
    orders: &'a [u8],
    steps: [[usize; 3]; 24],
    strides: [usize; 4],
    far: usize,
    shift: u32,
    interval: u32,
}

impl<'a> Kernel4<'a> {
    fn new(f: &FastLut<'a>) -> Self {
        Self {
            values: f.lut.values(),
            orders: f.table.orders(),
            steps: f.steps,
            strides: f.lut.strides(),
            far: f.corners[15],
            shift: f.lut.shift(),
            interval: f.lut.interval(),
        }
    }

    #[inline(always)]
    fn tile(&self, px: [u8; 4]) -> [u8; LANES] {
        let shift = self.shift;
        let mask = self.interval - 1;
        let lsb = px.map(|p| u32::from(p) & mask);
        let base: usize = (0..4).map(|i| (usize::from(px[i]) >> shift) * self.strides[i]).sum();
        let idx = (lsb[0] << (3 * shift)) | (lsb[1] << (2 * shift)) | (lsb[2] << shift) | lsb[3];
        let order = self.orders[idx as usize] as usize;
        let [a, b, c, d] = AXIS_ORDERS[order].map(|axis| lsb[axis as usize]);
        let step = &self.steps[order];
        let rows =
            [base, base + step[0], base + step[1], base + step[2], base + self.far].map(|o| lane(self.values, o));
        let weights = [self.interval - a, a - b, b - c, c - d, d].map(|x| x as u16);
        let mut out = [0u8; LANES];
        blend_lanes(rows, weights, (self.interval >> 1) as u16, shift, &mut out);
        out
    }
}

#[inline(always)]
fn lane(p: &[u8], at: usize) -> &[u8; LANES] {
    p[at..at + LANES].try_into().unwrap()
}

/// Weighted sum of five vertex rows in 16-bit lanes.
///
/// The weights sum to the interval `s` (at most 64), so every partial sum is
/// bounded by `64 * 255 + 32` and the wrapping ops never wrap, and the
/// result `(acc + s/2) >> log2(s)` is at most 255.
#[inline(always)]
fn blend_lanes(p: [&[u8; LANES]; 5], w: [u16; 5], half: u16, shift: u32, out: &mut [u8; LANES]) {
    for j in 0..LANES {
        let acc = w[0]
            .wrapping_mul(u16::from(p[0][j]))
            .wrapping_add(w[1].wrapping_mul(u16::from(p[1][j])))
            .wrapping_add(w[2].wrapping_mul(u16::from(p[2][j])))
            .wrapping_add(w[3].wrapping_mul(u16::from(p[3][j])))
            .wrapping_add(w[4].wrapping_mul(u16::from(p[4][j])))
            .wrapping_add(half);
        out[j] = (acc >> shift) as u8;
    }
}

pub fn tetra_interp_fast_into<P: OpProbe>(
    lut: &LutTable,
    table: &OrderTable,
    px: [u8; 4],
    out: &mut [u8],
    probe: &mut P,
) -> Result<()> {
    if out.len() < lut.patch_len() {
        return Err(Error::shape(format!(
            "output holds {} samples, patch needs {}",
            out.len(),
            lut.patch_len()
        )));
    }
    FastLut::new(lut, table)?.query_into(px, out, probe);
    Ok(())
}

/// Order-table tetrahedral query: the `r x r` output patch for `(x, y, z, u)`.
pub fn tetra_interp_fast(lut: &LutTable, table: &OrderTable, px: [u8; 4]) -> Result<Vec<u8>> {
    let mut out = vec![0; lut.patch_len()];
    tetra_interp_fast_into(lut, table, px, &mut out, &mut NoProbe)?;
    Ok(out)
}
