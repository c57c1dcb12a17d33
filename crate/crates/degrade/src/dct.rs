//! 8×8 orthonormal DCT quantization standing in for a video codec.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use lutsr_core::plane::{Frame, Plane};
use lutsr_core::{Error, Result};

pub const MAX_QP: u8 = 50;
pub const DCT_BLOCK: usize = 8;
pub const MACRO_BLOCK: usize = 16;

/// `2^((QP - 4) / 6)`: the step doubles every 6 QP.
pub fn qstep(qp: u8) -> f64 {
    2f64.powf((f64::from(qp) - 4.0) / 6.0)
}

fn basis() -> &'static [[f64; 8]; 8] {
    static C: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    C.get_or_init(|| {
        let mut c = [[0.0; 8]; 8];
        for (k, row) in c.iter_mut().enumerate() {
            let alpha = if k == 0 {
                (1.0f64 / 8.0).sqrt()
            } else {
                (2.0f64 / 8.0).sqrt()
            };
            for (n, v) in row.iter_mut().enumerate() {
                *v = alpha * ((2 * n + 1) as f64 * k as f64 * PI / 16.0).cos();
            }
        }
        c
    })
}

/// `C · B · Cᵀ` on a row-major 8×8 block.
pub fn dct8(block: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut tmp = [0.0; 64];
    for k in 0..8 {
        for x in 0..8 {
            tmp[k * 8 + x] = (0..8).map(|n| c[k][n] * block[n * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for k in 0..8 {
        for l in 0..8 {
            out[k * 8 + l] = (0..8).map(|n| tmp[k * 8 + n] * c[l][n]).sum();
        }
    }
    out
}

/// `Cᵀ · F · C`.
pub fn idct8(coef: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut tmp = [0.0; 64];
    for n in 0..8 {
        for l in 0..8 {
            tmp[n * 8 + l] = (0..8).map(|k| c[k][n] * coef[k * 8 + l]).sum();
        }
    }
    let mut out = [0.0; 64];
    for n in 0..8 {
        for m in 0..8 {
            out[n * 8 + m] = (0..8).map(|l| tmp[n * 8 + l] * c[l][m]).sum();
        }
    }
    out
}

/// Per-macro-block QP over an LR plane.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QpMap {
    pub width: usize,
    pub height: usize,
    pub block: usize,
    pub qp: Vec<u8>,
}

impl QpMap {
    pub fn new(width: usize, height: usize, qp: Vec<u8>) -> Result<Self> {
        let want = width.div_ceil(MACRO_BLOCK) * height.div_ceil(MACRO_BLOCK);
        if qp.len() != want {
            return Err(Error::shape(format!(
                "{width}x{height} needs {want} macro-block QPs, got {}",
                qp.len()
            )));
        }
        if let Some(q) = qp.iter().find(|&&q| q > MAX_QP) {
            return Err(Error::invalid(format!("QP {q} outside [0, {MAX_QP}]")));
        }
        Ok(Self {
            width,
            height,
            block: MACRO_BLOCK,
            qp,
        })
    }

    pub fn uniform(width: usize, height: usize, qp: u8) -> Self {
        let n = width.div_ceil(MACRO_BLOCK) * height.div_ceil(MACRO_BLOCK);
        Self {
            width,
            height,
            block: MACRO_BLOCK,
            qp: vec![qp.min(MAX_QP); n],
        }
    }

    pub fn blocks_x(&self) -> usize {
        self.width.div_ceil(self.block)
    }

    pub fn blocks_y(&self) -> usize {
        self.height.div_ceil(self.block)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.qp[(y / self.block) * self.blocks_x() + x / self.block]
    }

    pub fn mean(&self) -> f64 {
        self.qp.iter().map(|&q| f64::from(q)).sum::<f64>() / self.qp.len().max(1) as f64
    }
}

/// Forward DCT of every 8×8 block of a plane, level-shifted by 128. Partial
/// edge blocks are padded by replicating the last row and column.
pub struct Coefficients {
    width: usize,
    height: usize,
    blocks_x: usize,
    blocks: Vec<[f64; 64]>,
}

impl Coefficients {
    pub fn of(p: &Plane<u8>) -> Self {
        let (w, h) = (p.width(), p.height());
        let (bx, by) = (w.div_ceil(DCT_BLOCK), h.div_ceil(DCT_BLOCK));
        let mut blocks = Vec::with_capacity(bx * by);
        for j in 0..by {
            for i in 0..bx {
                let mut b = [0.0; 64];
                for y in 0..8 {
                    for x in 0..8 {
                        let v = p.get_clamped((i * 8 + x) as isize, (j * 8 + y) as isize);
                        b[y * 8 + x] = f64::from(v) - 128.0;
                    }
                }
                blocks.push(dct8(&b));
            }
        }
        Self {
            width: w,
            height: h,
            blocks_x: bx,
            blocks,
        }
    }

    fn block_qp(&self, idx: usize, map: &QpMap) -> u8 {
        let (i, j) = (idx % self.blocks_x, idx / self.blocks_x);
        map.at(i * DCT_BLOCK, j * DCT_BLOCK)
    }

    /// Bit-cost proxy of the quantized blocks: an all-zero block costs a
    /// quarter bit; otherwise one bit plus `2·bitlen(|q|) + 1` per non-zero
    /// level.
    pub fn bits(&self, map: &QpMap) -> u64 {
        let mut quarter_bits = 0u64;
        for (idx, b) in self.blocks.iter().enumerate() {
            let step = qstep(self.block_qp(idx, map));
            let mut block = 0u64;
            for &c in b {
                let q = (c / step).round().abs() as u64;
                if q != 0 {
                    block += 2 * u64::from(u64::BITS - q.leading_zeros()) + 1;
                }
            }
            quarter_bits += if block == 0 { 1 } else { 4 * (block + 1) };
        }
        quarter_bits.div_ceil(4)
    }

    /// Quantize with `map` (or not at all) and invert.
    pub fn reconstruct(&self, map: Option<&QpMap>) -> Plane<u8> {
        let mut out = vec![0u8; self.width * self.height];
        for (idx, b) in self.blocks.iter().enumerate() {
            let deq = match map {
                Some(m) => {
                    let step = qstep(self.block_qp(idx, m));
                    b.map(|c| (c / step).round() * step)
                }
                None => *b,
            };
            let px = idct8(&deq);
            let (i, j) = (idx % self.blocks_x, idx / self.blocks_x);
            for y in 0..8 {
                let yy = j * 8 + y;
                if yy >= self.height {
                    break;
                }
                for x in 0..8 {
                    let xx = i * 8 + x;
                    if xx >= self.width {
                        break;
                    }
                    out[yy * self.width + xx] = (px[y * 8 + x] + 128.0).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        Plane::new(self.width, self.height, out).expect("plane size")
    }
}

fn check_map(p: &Plane<u8>, map: &QpMap) -> Result<()> {
    if (map.width, map.height) != (p.width(), p.height()) {
        return Err(Error::shape(format!(
            "QP map covers {}x{}, plane is {}x{}",
            map.width,
            map.height,
            p.width(),
            p.height()
        )));
    }
    Ok(())
}

/// Quantize each 8×8 block with the QP of its macro-block and reconstruct.
pub fn compress_block_dct(lr: &Plane<u8>, map: &QpMap) -> Result<Plane<u8>> {
    check_map(lr, map)?;
    Ok(Coefficients::of(lr).reconstruct(Some(map)))
}

/// DCT and inverse DCT without quantization.
pub fn dct_roundtrip(lr: &Plane<u8>) -> Plane<u8> {
    Coefficients::of(lr).reconstruct(None)
}

pub fn compress_frame(lr: &Frame, map: &QpMap) -> Result<Frame> {
    Frame::new(
        lr.planes()
            .iter()
            .map(|p| compress_block_dct(p, map))
            .collect::<Result<_>>()?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use lutsr_core::metrics::psnr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Smooth gradients, an edge and mild noise.
    fn natural(w: usize, h: usize) -> Plane<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Plane::from_fn(w, h, |x, y| {
            let base = 90.0 + 60.0 * ((x as f64) * 0.11).sin() + 40.0 * ((y as f64) * 0.07).cos();
            let edge = if x > w / 2 { 30.0 } else { 0.0 };
            (base + edge + rng.gen_range(-6.0..6.0)).round().clamp(0.0, 255.0) as u8
        })
    }

    #[test]
    fn transform_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: [f64; 64] = std::array::from_fn(|_| rng.gen_range(-128.0..128.0));
        let back = idct8(&dct8(&b));
        for (a, c) in b.iter().zip(back) {
            assert!((a - c).abs() < 1e-9);
        }
        let energy: f64 = b.iter().map(|v| v * v).sum();
        let coef: f64 = dct8(&b).iter().map(|v| v * v).sum();
        assert!((energy - coef).abs() < 1e-6 * energy);
    }

    #[test]
    fn unquantized_round_trip_is_within_one_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Plane::from_fn(37, 21, |_, _| rng.gen());
        let back = dct_roundtrip(&p);
        for (a, b) in p.data().iter().zip(back.data()) {
            assert!((i16::from(*a) - i16::from(*b)).abs() <= 1);
        }
    }

    #[test]
    fn qp_zero_is_near_lossless() {
        let p = natural(64, 48);
        let out = compress_block_dct(&p, &QpMap::uniform(64, 48, 0)).unwrap();
        assert!(psnr(&p, &out).unwrap() > 45.0);
    }

    #[test]
    fn psnr_does_not_increase_with_qp() {
        let p = natural(64, 48);
        let scores: Vec<f64> = [0u8, 10, 20, 30, 40, 50]
            .iter()
            .map(|&q| psnr(&p, &compress_block_dct(&p, &QpMap::uniform(64, 48, q)).unwrap()).unwrap())
            .collect();
        for w in scores.windows(2) {
            assert!(w[1] <= w[0], "{scores:?}");
        }
        assert!(scores[5] < scores[1]);
    }

    #[test]
    fn bits_fall_with_qp() {
        let c = Coefficients::of(&natural(64, 48));
        let bits: Vec<u64> = (0..=MAX_QP).map(|q| c.bits(&QpMap::uniform(64, 48, q))).collect();
        assert!(bits[0] > bits[50]);
        assert!(bits[50] > 0);
    }

    #[test]
    fn qp_map_validation() {
        assert!(QpMap::new(40, 20, vec![0; 6]).is_ok());
        assert!(QpMap::new(40, 20, vec![0; 5]).is_err());
        assert!(QpMap::new(40, 20, vec![51; 6]).is_err());
        let m = QpMap::new(40, 20, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(m.at(39, 19), 6);
        assert!(compress_block_dct(&Plane::filled(8, 8, 0), &m).is_err());
        assert_eq!(qstep(4), 1.0);
        assert_eq!(qstep(10), 2.0);
    }
}
