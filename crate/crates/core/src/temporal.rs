//! Temporal refinement: a small conv net over the current frame, the previous
//! frame and block motion, producing an HR residual added to the spatial
//! branch.

use serde::{Deserialize, Serialize};

use crate::nnet::{Net, Tensor4};
use crate::plane::Plane;
use crate::{Error, Real, Result};

pub const MACRO_BLOCK: usize = 16;
pub const SEARCH_RADIUS: u32 = 8;

/// Block motion vectors; `cur(x, y) ≈ prev(x - dx, y - dy)` inside each block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionField {
    pub width: usize,
    pub height: usize,
    pub block: usize,
    pub radius: u32,
    /// Row-major over blocks, `[dx, dy]`.
    pub vectors: Vec<[i32; 2]>,
}

impl MotionField {
    pub fn new(width: usize, height: usize, block: usize, radius: u32, vectors: Vec<[i32; 2]>) -> Result<Self> {
        if block == 0 {
            return Err(Error::invalid("motion block size must be positive"));
        }
        let want = width.div_ceil(block) * height.div_ceil(block);
        if vectors.len() != want {
            return Err(Error::shape(format!(
                "{width}x{height} with {block}px blocks needs {want} vectors, got {}",
                vectors.len()
            )));
        }
        let r = radius as i32;
        if let Some(v) = vectors.iter().find(|v| v[0].abs() > r || v[1].abs() > r) {
            return Err(Error::invalid(format!("motion vector {v:?} exceeds radius {radius}")));
        }
        Ok(Self {
            width,
            height,
            block,
            radius,
            vectors,
        })
    }

    pub fn zeros(width: usize, height: usize, block: usize, radius: u32) -> Self {
        let n = width.div_ceil(block.max(1)) * height.div_ceil(block.max(1));
        Self {
            width,
            height,
            block: block.max(1),
            radius,
            vectors: vec![[0, 0]; n],
        }
    }

    pub fn blocks_x(&self) -> usize {
        self.width.div_ceil(self.block)
    }

    pub fn blocks_y(&self) -> usize {
        self.height.div_ceil(self.block)
    }

    pub fn block_vector(&self, bx: usize, by: usize) -> [i32; 2] {
        self.vectors[by * self.blocks_x() + bx]
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [i32; 2] {
        self.block_vector(x / self.block, y / self.block)
    }
}

/// `(1, 4, h, w)` input: current and previous frame in [0,1], then motion
/// divided by the search radius. A missing previous frame is replaced by the
/// current one and missing motion by zeros.
pub fn temporal_input<T: Real>(
    cur: &Plane<u8>,
    prev: Option<&Plane<u8>>,
    motion: Option<&MotionField>,
) -> Result<Tensor4<T>> {
    let (w, h) = (cur.width(), cur.height());
    if w == 0 || h == 0 {
        return Err(Error::invalid("empty frame"));
    }
    let prev = prev.unwrap_or(cur);
    if !prev.same_size(cur) {
        return Err(Error::shape(format!(
            "previous frame {}x{}, current {w}x{h}",
            prev.width(),
            prev.height()
        )));
    }
    if let Some(m) = motion {
        if (m.width, m.height) != (w, h) {
            return Err(Error::shape(format!(
                "motion field {}x{}, frame {w}x{h}",
                m.width, m.height
            )));
        }
    }
    let k = T::lit(1.0 / 255.0);
    let mut data = Vec::with_capacity(4 * w * h);
    data.extend(cur.data().iter().map(|&v| T::lit(f64::from(v)) * k));
    data.extend(prev.data().iter().map(|&v| T::lit(f64::from(v)) * k));
    for c in 0..2 {
        for y in 0..h {
            for x in 0..w {
                data.push(match motion {
                    Some(m) => T::lit(f64::from(m.at(x, y)[c]) / f64::from(m.radius.max(1))),
                    None => T::zero(),
                });
            }
        }
    }
    Tensor4::new([1, 4, h, w], data)
}

/// HR residual in gray levels.
pub fn temporal_branch<T: Real>(
    net: &Net<T>,
    cur: &Plane<u8>,
    prev: Option<&Plane<u8>>,
    motion: Option<&MotionField>,
) -> Result<Plane<T>> {
    let x = temporal_input(cur, prev, motion)?;
    let y = net.forward(&x)?;
    let [_, c, hh, ww] = y.shape();
    if c != 1 {
        return Err(Error::invalid(format!(
            "temporal net must produce one channel, got {c}"
        )));
    }
    let k = T::lit(255.0);
    Plane::new(ww, hh, y.data().iter().map(|&v| v * k).collect())
}

/// `round(spatial + residual)` clamped to 8 bits.
pub fn combine<T: Real>(spatial: &Plane<u8>, residual: &Plane<T>) -> Result<Plane<u8>> {
    if !spatial.same_size(residual) {
        return Err(Error::shape(format!(
            "spatial {}x{}, residual {}x{}",
            spatial.width(),
            spatial.height(),
            residual.width(),
            residual.height()
        )));
    }
    let data = spatial
        .data()
        .iter()
        .zip(residual.data())
        .map(|(&s, &r)| {
            let v = (T::lit(f64::from(s)) + r).round();
            v.max(T::zero()).min(T::lit(255.0)).to_u8().unwrap_or(0)
        })
        .collect();
    Plane::new(spatial.width(), spatial.height(), data)
}
