//! Single-channel planes and multi-channel 8-bit frames.

use std::path::Path;

use crate::{Error, Result};

/// BT.601 luma coefficients.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major 2D array of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "plane {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped into the plane (replicate border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_size<U>(&self, other: &Plane<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Copy of the `w`x`h` window starting at (`x0`, `y0`).
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        Ok(Self::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }
}

/// Round half away from zero and clamp into the 8-bit range.
#[inline]
pub fn round_clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// 8-bit frame with one (gray) or three (RGB) channel planes.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    planes: Vec<Plane<u8>>,
}

impl Frame {
    pub fn new(planes: Vec<Plane<u8>>) -> Result<Self> {
        let Some(first) = planes.first() else {
            return Err(Error::invalid("frame needs at least one plane"));
        };
        if planes.len() != 1 && planes.len() != 3 {
            return Err(Error::invalid(format!(
                "frame must have 1 or 3 planes, got {}",
                planes.len()
            )));
        }
        if planes.iter().any(|p| !p.same_size(first)) {
            return Err(Error::shape("frame planes differ in size"));
        }
        Ok(Self { planes })
    }

    pub fn gray(plane: Plane<u8>) -> Self {
        Self { planes: vec![plane] }
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn planes(&self) -> &[Plane<u8>] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<Plane<u8>> {
        self.planes
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.channels() == other.channels() && self.width() == other.width() && self.height() == other.height()
    }

    /// Unrounded BT.601 luma.
    pub fn luma_f64(&self) -> Plane<f64> {
        if self.planes.len() == 1 {
            return self.planes[0].map(f64::from);
        }
        let [r, g, b] = [&self.planes[0], &self.planes[1], &self.planes[2]];
        Plane::from_fn(self.width(), self.height(), |x, y| {
            LUMA_WEIGHTS[0] * f64::from(r.get(x, y))
                + LUMA_WEIGHTS[1] * f64::from(g.get(x, y))
                + LUMA_WEIGHTS[2] * f64::from(b.get(x, y))
        })
    }

    /// 8-bit BT.601 luma.
    pub fn luma(&self) -> Plane<u8> {
        if self.planes.len() == 1 {
            return self.planes[0].clone();
        }
        self.luma_f64().map(round_clamp_u8)
    }

    /// Load any PNG as an RGB frame.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let raw = img.into_raw();
        let planes = (0..3)
            .map(|c| Plane {
                width: w,
                height: h,
                data: raw.iter().skip(c).step_by(3).copied().collect(),
            })
            .collect();
        Ok(Self { planes })
    }

    /// Write as an 8-bit PNG (gray or RGB).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let (w, h) = (self.width() as u32, self.height() as u32);
        match self.planes.len() {
            1 => image::GrayImage::from_raw(w, h, self.planes[0].data.clone())
                .ok_or_else(|| Error::shape("gray buffer size"))?
                .save_with_format(path.as_ref(), image::ImageFormat::Png)?,
            _ => {
                let mut raw = Vec::with_capacity(self.width() * self.height() * 3);
                for i in 0..self.width() * self.height() {
                    raw.extend(self.planes.iter().map(|p| p.data[i]));
                }
                image::RgbImage::from_raw(w, h, raw)
                    .ok_or_else(|| Error::shape("rgb buffer size"))?
                    .save_with_format(path.as_ref(), image::ImageFormat::Png)?
            }
        }
        Ok(())
    }
}
