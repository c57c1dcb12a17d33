//! Per-pixel expert fusion and full-frame LUT upscaling.
//!
//! A frame is upscaled by querying, for every LR pixel, the 2×2 window whose
//! top-left sample is that pixel (replicate padding on the right and bottom
//! edges) and writing the `r×r` result at `(r·i, r·j)`.

use rayon::prelude::*;

use crate::interp::{split_msb_lsb, FastLut, NoProbe, OpProbe, OrderTable};
use crate::lut::{ExpertBank, LutTable};
use crate::nnet::{Net, Tensor4};
use crate::plane::{Frame, Plane};
use crate::{Error, Real, Result};

/// Per-pixel expert weights, stored pixel-major as `(h, w, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap<T> {
    width: usize,
    height: usize,
    n: usize,
    data: Vec<T>,
}

impl<T: Real> WeightMap<T> {
    pub fn new(width: usize, height: usize, n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * n {
            return Err(Error::shape(format!(
                "weight map {width}x{height}x{n} needs {} values, got {}",
                width * height * n,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("weight map contains non-finite values"));
        }
        Ok(Self { width, height, n, data })
    }

    pub fn uniform(width: usize, height: usize, n: usize) -> Self {
        let w = T::one() / T::from_usize_lossy(n.max(1));
        Self {
            width,
            height,
            n,
            data: vec![w; width * height * n],
        }
    }

    pub fn one_hot(width: usize, height: usize, n: usize, k: usize) -> Self {
        let mut data = vec![T::zero(); width * height * n];
        for px in data.chunks_mut(n.max(1)) {
            px[k] = T::one();
        }
        Self { width, height, n, data }
    }

    /// From a `(1, n, h, w)` tensor.
    pub fn from_tensor(t: &Tensor4<T>) -> Result<Self> {
        let [b, n, h, w] = t.shape();
        if b != 1 {
            return Err(Error::shape(format!("weight tensor has batch {b}, expected 1")));
        }
        let hw = h * w;
        let mut data = vec![T::zero(); hw * n];
        for k in 0..n {
            for (p, &v) in t.plane(0, k).iter().enumerate() {
                data[p * n + k] = v;
            }
        }
        Self::new(w, h, n, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn experts(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[T] {
        let o = (y * self.width + x) * self.n;
        &self.data[o..o + self.n]
    }
}

/// The 16 vertices of one lattice cell, blended across experts.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedCell<T> {
    interval: u32,
    lsb: [u32; 4],
    patch_len: usize,
    /// `values[mask * patch_len + sub]`, mask bits as in `P_xyzu`.
    values: Vec<T>,
}

impl<T: Real> FusedCell<T> {
    pub fn gather(bank: &ExpertBank, weights: &[T], px: [u8; 4]) -> Result<Self> {
        check_weights(bank, weights)?;
        let split = split_msb_lsb(px, bank.interval())?;
        let rr = bank.luts()[0].patch_len();
        let mut values = vec![T::zero(); 16 * rr];
        for mask in 0..16u8 {
            let idx = split.corner(mask);
            let dst = &mut values[mask as usize * rr..(mask as usize + 1) * rr];
            for (lut, &w) in bank.luts().iter().zip(weights) {
                for (d, &v) in dst.iter_mut().zip(lut.entry(idx)) {
                    *d += w * T::lit(f64::from(v));
                }
            }
        }
        Ok(Self {
            interval: bank.interval(),
            lsb: split.lsb,
            patch_len: rr,
            values,
        })
    }

    pub fn vertex(&self, mask: u8) -> &[T] {
        let m = mask as usize;
        &self.values[m * self.patch_len..(m + 1) * self.patch_len]
    }

    /// Order-table simplex interpolation over the blended vertices, rounded
    /// half away from zero and clamped.
    pub fn interpolate(&self, table: &OrderTable) -> Result<Vec<u8>> {
        if table.interval() != self.interval {
            return Err(Error::invalid(format!(
                "order table built for interval {} but cell uses {}",
                table.interval(),
                self.interval
            )));
        }
        let e = table.lookup(self.lsb);
        let [a, b, c, d] = e.sorted.map(u32::from);
        let sw = [self.interval - a, a - b, b - c, c - d, d].map(|v| T::lit(f64::from(v)));
        let masks = [0, e.masks[0], e.masks[1], e.masks[2], 15];
        let s = T::lit(f64::from(self.interval));
        Ok((0..self.patch_len)
            .map(|sub| {
                let mut acc = T::zero();
                for (w, &m) in sw.iter().zip(&masks) {
                    acc += *w * self.vertex(m)[sub];
                }
                round_clamp(acc / s)
            })
            .collect())
    }
}

#[inline]
fn round_clamp<T: Real>(v: T) -> u8 {
    v.round().max(T::zero()).min(T::lit(255.0)).to_u8().unwrap_or(0)
}

fn check_weights<T>(bank: &ExpertBank, weights: &[T]) -> Result<()> {
    if weights.len() != bank.len() {
        return Err(Error::invalid(format!(
            "{} weights for a bank of {} experts",
            weights.len(),
            bank.len()
        )));
    }
    Ok(())
}

/// Fuse-then-interpolate query through a [`FusedCell`].
pub fn fused_query<T: Real>(bank: &ExpertBank, weights: &[T], px: [u8; 4], table: &OrderTable) -> Result<Vec<u8>> {
    FusedCell::gather(bank, weights, px)?.interpolate(table)
}

/// A bank bound to its order table for repeated fused queries. Only the five
/// simplex vertices a query touches are blended; the arithmetic order matches
/// [`FusedCell`] so results are bit-identical.
pub struct FusedBank<'a> {
    fast: Vec<FastLut<'a>>,
    interval: u32,
    patch_len: usize,
}

impl<'a> FusedBank<'a> {
    pub fn new(bank: &'a ExpertBank, table: &'a OrderTable) -> Result<Self> {
        let fast = bank
            .luts()
            .iter()
            .map(|l| FastLut::new(l, table))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fast,
            interval: bank.interval(),
            patch_len: bank.luts()[0].patch_len(),
        })
    }

    pub fn experts(&self) -> usize {
        self.fast.len()
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    /// Vertex offsets and integer barycentric weights of the query simplex.
    #[inline]
    pub fn simplex(&self, px: [u8; 4]) -> ([usize; 5], [u32; 5]) {
        self.fast[0].simplex(px)
    }

    #[inline]
    pub fn query_into<T: Real, P: OpProbe>(&self, px: [u8; 4], weights: &[T], out: &mut [u8], probe: &mut P) {
        let (o, sw) = self.simplex(px);
        let sw = sw.map(|v| T::lit(f64::from(v)));
        let s = T::lit(f64::from(self.interval));
        for (sub, dst) in out[..self.patch_len].iter_mut().enumerate() {
            let mut acc = T::zero();
            for (w, &off) in sw.iter().zip(&o) {
                let mut v = T::zero();
                for (f, &wk) in self.fast.iter().zip(weights) {
                    probe.fetch();
                    probe.mul();
                    v += wk * T::lit(f64::from(f.lut().values()[off + sub]));
                }
                probe.mul();
                acc += *w * v;
            }
            *dst = round_clamp(acc / s);
        }
    }

    /// Unrounded per-expert interpolation `Σ_i w_i·O_i / s` for each sample.
    pub fn expert_values_into<T: Real>(&self, px: [u8; 4], out: &mut [T]) {
        let (o, sw) = self.simplex(px);
        let s = T::lit(f64::from(self.interval));
        let rr = self.patch_len;
        for (k, f) in self.fast.iter().enumerate() {
            let v = f.lut().values();
            for sub in 0..rr {
                let mut acc = 0u32;
                for (w, &off) in sw.iter().zip(&o) {
                    acc += w * u32::from(v[off + sub]);
                }
                out[k * rr + sub] = T::lit(f64::from(acc)) / s;
            }
        }
    }
}

/// The 2×2 query window whose top-left sample is `(x, y)`.
#[inline]
pub fn query_patch(lr: &Plane<u8>, x: usize, y: usize) -> [u8; 4] {
    let x1 = (x + 1).min(lr.width() - 1);
    let y1 = (y + 1).min(lr.height() - 1);
    [lr.get(x, y), lr.get(x1, y), lr.get(x, y1), lr.get(x1, y1)]
}

fn check_frame(lr: &Plane<u8>) -> Result<()> {
    if lr.is_empty() {
        return Err(Error::invalid("empty frame"));
    }
    Ok(())
}

/// Upscale `lr` by `scale`, calling `query(x, y, patch, tile)` for every LR
/// pixel; rows run in parallel.
pub fn upscale_with<F>(lr: &Plane<u8>, scale: usize, query: F) -> Result<Plane<u8>>
where
    F: Fn(usize, usize, [u8; 4], &mut [u8]) + Sync,
{
    check_frame(lr)?;
    let (w, h) = (lr.width(), lr.height());
    let hw = w * scale;
    let mut out = vec![0u8; hw * h * scale];
    out.par_chunks_mut(hw * scale).enumerate().for_each(|(y, rows)| {
        let mut tile = vec![0u8; scale * scale];
        for x in 0..w {
            query(x, y, query_patch(lr, x, y), &mut tile);
            write_tile(rows, hw, x * scale, scale, &tile);
        }
    });
    Plane::new(hw, h * scale, out)
}

/// Sequential variant of [`upscale_with`] for callers that count operations.
pub fn upscale_with_mut<F>(lr: &Plane<u8>, scale: usize, mut query: F) -> Result<Plane<u8>>
where
    F: FnMut(usize, usize, [u8; 4], &mut [u8]),
{
    check_frame(lr)?;
    let (w, h) = (lr.width(), lr.height());
    let hw = w * scale;
    let mut out = vec![0u8; hw * h * scale];
    let mut tile = vec![0u8; scale * scale];
    for (y, rows) in out.chunks_mut(hw * scale).enumerate() {
        for x in 0..w {
            query(x, y, query_patch(lr, x, y), &mut tile);
            write_tile(rows, hw, x * scale, scale, &tile);
        }
    }
    Plane::new(hw, h * scale, out)
}

#[inline]
fn write_tile(rows: &mut [u8], stride: usize, x0: usize, r: usize, tile: &[u8]) {
    for i in 0..r {
        rows[i * stride + x0..i * stride + x0 + r].copy_from_slice(&tile[i * r..(i + 1) * r]);
    }
}

/// Single-LUT upscale through the order table, integer arithmetic only.
pub fn upscale_lut(lut: &LutTable, table: &OrderTable, lr: &Plane<u8>) -> Result<Plane<u8>> {
    FastLut::new(lut, table)?.upscale(lr)
}

/// Run the predictor on a frame (luma scaled to [0,1]) and return its
/// per-pixel weights.
pub fn predict_weights<T: Real>(net: &Net<T>, lr: &Plane<u8>, experts: usize) -> Result<WeightMap<T>> {
    check_frame(lr)?;
    let x = plane_tensor(lr);
    let out_shape = net.out_shape(x.shape())?;
    if out_shape[1] != experts || out_shape[2..] != [lr.height(), lr.width()] {
        return Err(Error::invalid(format!(
            "predictor produces {} channels at {}x{}, bank has {experts} experts at {}x{}",
            out_shape[1],
            out_shape[3],
            out_shape[2],
            lr.width(),
            lr.height()
        )));
    }
    WeightMap::from_tensor(&net.forward(&x)?)
}

/// A `(1, 1, h, w)` tensor holding `plane / 255`.
pub fn plane_tensor<T: Real>(p: &Plane<u8>) -> Tensor4<T> {
    let k = T::lit(1.0 / 255.0);
    let data = p.data().iter().map(|&v| T::lit(f64::from(v)) * k).collect();
    Tensor4::new([1, 1, p.height(), p.width()], data).expect("plane shape")
}

/// Fused upscale of one plane with precomputed weights.
pub fn spatial_branch_with_weights<T: Real>(
    bank: &ExpertBank,
    table: &OrderTable,
    weights: &WeightMap<T>,
    lr: &Plane<u8>,
) -> Result<Plane<u8>> {
    check_frame(lr)?;
    if weights.width() != lr.width() || weights.height() != lr.height() {
        return Err(Error::shape(format!(
            "weight map {}x{} for a {}x{} frame",
            weights.width(),
            weights.height(),
            lr.width(),
            lr.height()
        )));
    }
    if weights.experts() != bank.len() {
        return Err(Error::invalid(format!(
            "weight map has {} experts, bank has {}",
            weights.experts(),
            bank.len()
        )));
    }
    let fused = FusedBank::new(bank, table)?;
    upscale_with(lr, bank.scale(), |x, y, px, tile| {
        fused.query_into(px, weights.at(x, y), tile, &mut NoProbe)
    })
}

/// Predict weights from the frame and upscale it through the fused bank.
pub fn spatial_branch<T: Real>(
    bank: &ExpertBank,
    table: &OrderTable,
    predictor: &Net<T>,
    lr: &Plane<u8>,
) -> Result<Plane<u8>> {
    let w = predict_weights(predictor, lr, bank.len())?;
    spatial_branch_with_weights(bank, table, &w, lr)
}

/// Colour frames: one weight map from the luma, applied to every channel.
pub fn spatial_branch_frame<T: Real>(
    bank: &ExpertBank,
    table: &OrderTable,
    predictor: &Net<T>,
    lr: &Frame,
) -> Result<Frame> {
    let w = predict_weights(predictor, &lr.luma(), bank.len())?;
    let planes = lr
        .planes()
        .iter()
        .map(|p| spatial_branch_with_weights(bank, table, &w, p))
        .collect::<Result<Vec<_>>>()?;
    Frame::new(planes)
}

/// Rotate by `k` quarter turns counter-clockwise.
pub fn rotate90<T: Copy>(p: &Plane<T>, k: usize) -> Plane<T> {
    let (w, h) = (p.width(), p.height());
    match k % 4 {
        0 => p.clone(),
        1 => Plane::from_fn(h, w, |x, y| p.get(w - 1 - y, x)),
        2 => Plane::from_fn(w, h, |x, y| p.get(w - 1 - x, h - 1 - y)),
        _ => Plane::from_fn(h, w, |x, y| p.get(y, h - 1 - x)),
    }
}

/// Rotation-ensemble inference with a single LUT: upscale the four
/// rotations of the frame, rotate each result back and average with rounding
/// half away from zero.
pub fn srlut_rotation_ensemble_counted<P: OpProbe>(
    lut: &LutTable,
    table: &OrderTable,
    lr: &Plane<u8>,
    probe: &mut P,
) -> Result<Plane<u8>> {
    check_frame(lr)?;
    let fast = FastLut::new(lut, table)?;
    let r = lut.scale();
    let mut acc = vec![0u16; lr.width() * r * lr.height() * r];
    for k in 0..4 {
        let rotated = rotate90(lr, k);
        let up = upscale_with_mut(&rotated, r, |_, _, px, tile| fast.query_into(px, tile, probe))?;
        let back = rotate90(&up, (4 - k) % 4);
        for (a, &v) in acc.iter_mut().zip(back.data()) {
            *a += u16::from(v);
        }
    }
    let data = acc.into_iter().map(|v| ((v + 2) / 4) as u8).collect();
    Plane::new(lr.width() * r, lr.height() * r, data)
}

pub fn srlut_rotation_ensemble(lut: &LutTable, table: &OrderTable, lr: &Plane<u8>) -> Result<Plane<u8>> {
    srlut_rotation_ensemble_counted(lut, table, lr, &mut NoProbe)
}
