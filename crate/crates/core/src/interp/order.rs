//! Precomputed sort/vertex table that replaces the 24-case control flow.

use crate::lut::check_interval;
use crate::{Error, Result};

/// Largest interval whose table is materialized (`64^4` entries, ~117 MB).
pub const MAX_ORDER_INTERVAL: u32 = 64;

/// One `[.., 7]` row: the LSBs sorted descending and the corner masks of
/// O2, O3, O4. O1 = 0000 and O5 = 1111 are implicit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[repr(C)]
pub struct OrderEntry {
    pub sorted: [u8; 4],
    pub masks: [u8; 3],
}

/// The 24 axis orders, lexicographic. Entry `i` lists the axes from the
/// largest LSB to the smallest.
pub const AXIS_ORDERS: [[u8; 4]; 24] = axis_orders();

const fn axis_orders() -> [[u8; 4]; 24] {
    let mut out = [[0u8; 4]; 24];
    let mut n = 0;
    let mut a = 0;
    while a < 4 {
        let mut b = 0;
        while b < 4 {
            let mut c = 0;
            while c < 4 {
                if a != b && a != c && b != c {
                    out[n] = [a, b, c, 6 - a - b - c];
                    n += 1;
                }
                c += 1;
            }
            b += 1;
        }
        a += 1;
    }
    out
}

/// `s^4` entries indexed by `(Lx, Ly, Lz, Lu)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderTable {
    interval: u32,
    shift: u32,
    entries: Vec<OrderEntry>,
    /// Per entry, its index into [`AXIS_ORDERS`]; one byte per LSB tuple
    /// keeps the hot lookup small.
    orders: Vec<u8>,
}

impl OrderTable {
    pub fn build(interval: u32) -> Result<Self> {
        check_interval(interval)?;
        if interval > MAX_ORDER_INTERVAL {
            return Err(Error::invalid(format!(
                "order table for interval {interval} would need {interval}^4 entries; max interval is {MAX_ORDER_INTERVAL}"
            )));
        }
        let shift = interval.trailing_zeros();
        let s = interval as usize;
        let mut entries = Vec::with_capacity(s.pow(4));
        for lx in 0..s {
            for ly in 0..s {
                for lz in 0..s {
                    for lu in 0..s {
                        entries.push(Self::entry_for([lx, ly, lz, lu].map(|v| v as u8)));
                    }
                }
            }
        }
        let orders = entries.iter().map(|e| Self::order_of(e.masks)).collect();
        Ok(Self {
            interval,
            shift,
            entries,
            orders,
        })
    }

    fn order_of(masks: [u8; 3]) -> u8 {
        let axis = |m: u8| 3 - m.trailing_zeros() as u8;
        let a = axis(masks[0]);
        let b = axis(masks[1] ^ masks[0]);
        let c = axis(masks[2] ^ masks[1]);
        AXIS_ORDERS
            .iter()
            .position(|o| o[..3] == [a, b, c])
            .expect("masks form a chain") as u8
    }

    /// Sort axes by value descending, equal values ordered u, z, y, x; each
    /// simplex step switches on the next axis in that order.
    fn entry_for(lsb: [u8; 4]) -> OrderEntry {
        let mut axes = [0usize, 1, 2, 3];
        axes.sort_by_key(|&a| std::cmp::Reverse((lsb[a], a)));
        let mut masks = [0u8; 3];
        let mut mask = 0u8;
        for (m, &axis) in masks.iter_mut().zip(&axes) {
            mask |= 0b1000 >> axis;
            *m = mask;
        }
        OrderEntry {
            sorted: axes.map(|a| lsb[a]),
            masks,
        }
    }

    #[inline]
    pub fn interval(&self) -> u32 {
        self.interval
    }

    #[inline]
    pub fn shift(&self) -> u32 {
        self.shift
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn entries(&self) -> &[OrderEntry] {
        &self.entries
    }

    /// [`AXIS_ORDERS`] index of every entry.
    #[inline]
    pub fn orders(&self) -> &[u8] {
        &self.orders
    }

    /// Entry for an LSB tuple (each component below the interval).
    pub fn lookup(&self, lsb: [u32; 4]) -> OrderEntry {
        let s = self.shift;
        let idx = (lsb[0] << (3 * s)) | (lsb[1] << (2 * s)) | (lsb[2] << s) | lsb[3];
        self.entries[idx as usize]
    }
}
