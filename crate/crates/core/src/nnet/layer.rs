use rand::Rng;
use rayon::prelude::*;

use super::Tensor4;
use crate::{Error, Real, Result};

pub const NORM_EPS: f64 = 1e-5;

/// 3×3 convolution, stride 1, zero padding 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3x3<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `(out, in, 3, 3)` row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv3x3<T> {
    pub fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            weight: vec![T::zero(); out_ch * in_ch * 9],
            bias: vec![T::zero(); out_ch],
        }
    }

    /// Kaiming-uniform over the fan-in with the gain of a leaky ReLU of
    /// `slope`; zero bias.
    pub fn kaiming<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, slope: f64, rng: &mut R) -> Self {
        let fan_in = (in_ch * 9) as f64;
        let bound = (6.0 / ((1.0 + slope * slope) * fan_in)).sqrt();
        let weight = (0..out_ch * in_ch * 9)
            .map(|_| T::lit(rng.gen_range(-bound..bound)))
            .collect();
        Self {
            in_ch,
            out_ch,
            weight,
            bias: vec![T::zero(); out_ch],
        }
    }

    #[inline]
    fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        self.weight[((o * self.in_ch + i) * 3 + ky) * 3 + kx]
    }
}

/// Per-(sample, channel) normalization with a learned affine.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Real> InstanceNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv3x3(Conv3x3<T>),
    InstanceNorm(InstanceNorm<T>),
    LeakyRelu { slope: T },
    PixelShuffle { factor: usize },
    SoftmaxChannels,
}

/// Activations kept from the forward pass for backward.
#[derive(Clone, Debug)]
pub(crate) enum LayerCache<T> {
    Input(Tensor4<T>),
    Norm { xhat: Tensor4<T>, inv_std: Vec<T> },
    Output(Tensor4<T>),
    Nothing,
}

/// Offset ranges for a 3×3 tap `(ky, kx)`: output rows/cols that read a valid input.
#[inline]
fn tap_range(k: usize, len: usize) -> (usize, usize, isize) {
    let d = k as isize - 1;
    let lo = if d < 0 { 1 } else { 0 };
    let hi = if d > 0 { len.saturating_sub(1) } else { len };
    (lo, hi, d)
}

/// `dst[y, x] += w * src[y + dy, x + dx]` over the valid window.
#[inline]
fn accumulate_tap<T: Real>(dst: &mut [T], src: &[T], h: usize, w: usize, ky: usize, kx: usize, wt: T) {
    let (y0, y1, dy) = tap_range(ky, h);
    let (x0, x1, dx) = tap_range(kx, w);
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let d = &mut dst[y * w + x0..y * w + x1];
        let sx0 = (x0 as isize + dx) as usize;
        let s = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
        for (a, &b) in d.iter_mut().zip(s) {
            *a += wt * b;
        }
    }
}

/// `dst[y + dy, x + dx] += w * src[y, x]`, the adjoint of [`accumulate_tap`].
#[inline]
fn scatter_tap<T: Real>(dst: &mut [T], src: &[T], h: usize, w: usize, ky: usize, kx: usize, wt: T) {
    let (y0, y1, dy) = tap_range(ky, h);
    let (x0, x1, dx) = tap_range(kx, w);
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let ty = (y as isize + dy) as usize;
        let tx0 = (x0 as isize + dx) as usize;
        let d = &mut dst[ty * w + tx0..ty * w + tx0 + (x1 - x0)];
        let s = &src[y * w + x0..y * w + x1];
        for (a, &b) in d.iter_mut().zip(s) {
            *a += wt * b;
        }
    }
}

/// `Σ src_a[y, x] * src_b[y + dy, x + dx]` over the valid window.
#[inline]
fn correlate_tap<T: Real>(a: &[T], b: &[T], h: usize, w: usize, ky: usize, kx: usize) -> T {
    let (y0, y1, dy) = tap_range(ky, h);
    let (x0, x1, dx) = tap_range(kx, w);
    let mut acc = T::zero();
    if x0 >= x1 {
        return acc;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let sx0 = (x0 as isize + dx) as usize;
        let ra = &a[y * w + x0..y * w + x1];
        let rb = &b[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
        for (&p, &q) in ra.iter().zip(rb) {
            acc += p * q;
        }
    }
    acc
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv3x3(_) => "conv3x3",
            Layer::InstanceNorm(_) => "instance_norm",
            Layer::LeakyRelu { .. } => "leaky_relu",
            Layer::PixelShuffle { .. } => "pixel_shuffle",
            Layer::SoftmaxChannels => "softmax",
        }
    }

    pub fn out_shape(&self, [b, c, h, w]: [usize; 4]) -> Result<[usize; 4]> {
        match self {
            Layer::Conv3x3(conv) => {
                if c != conv.in_ch {
                    return Err(Error::shape(format!(
                        "conv3x3 expects {} input channels, got {c}",
                        conv.in_ch
                    )));
                }
                Ok([b, conv.out_ch, h, w])
            }
            Layer::InstanceNorm(norm) => {
                if c != norm.channels() {
                    return Err(Error::shape(format!(
                        "instance_norm expects {} channels, got {c}",
                        norm.channels()
                    )));
                }
                Ok([b, c, h, w])
            }
            Layer::PixelShuffle { factor } => {
                let rr = factor * factor;
                if *factor == 0 || c % rr != 0 {
                    return Err(Error::shape(format!(
                        "pixel_shuffle({factor}) needs channels divisible by {rr}, got {c}"
                    )));
                }
                Ok([b, c / rr, h * factor, w * factor])
            }
            Layer::LeakyRelu { .. } | Layer::SoftmaxChannels => Ok([b, c, h, w]),
        }
    }

    pub fn params(&self) -> Vec<&[T]> {
        match self {
            Layer::Conv3x3(c) => vec![&c.weight, &c.bias],
            Layer::InstanceNorm(n) => vec![&n.gamma, &n.beta],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Conv3x3(c) => vec![&mut c.weight, &mut c.bias],
            Layer::InstanceNorm(n) => vec![&mut n.gamma, &mut n.beta],
            _ => Vec::new(),
        }
    }

    pub(crate) fn forward(&self, x: &Tensor4<T>, keep: bool) -> Result<(Tensor4<T>, LayerCache<T>)> {
        let out_shape = self.out_shape(x.shape())?;
        let y = match self {
            Layer::Conv3x3(conv) => conv_forward(conv, x, out_shape),
            Layer::InstanceNorm(norm) => {
                let (y, xhat, inv_std) = norm_forward(norm, x);
                let cache = if keep {
                    LayerCache::Norm { xhat, inv_std }
                } else {
                    LayerCache::Nothing
                };
                return Ok((y, cache));
            }
            Layer::LeakyRelu { slope } => {
                let s = *slope;
                let data = x
                    .data()
                    .iter()
                    .map(|&v| if v > T::zero() { v } else { v * s })
                    .collect();
                Tensor4::new(out_shape, data)?
            }
            Layer::PixelShuffle { factor } => pixel_shuffle(x, *factor)?,
            Layer::SoftmaxChannels => {
                let y = softmax_channels(x);
                let cache = if keep {
                    LayerCache::Output(y.clone())
                } else {
                    LayerCache::Nothing
                };
                return Ok((y, cache));
            }
        };
        let cache = match self {
            Layer::Conv3x3(_) | Layer::LeakyRelu { .. } if keep => LayerCache::Input(x.clone()),
            _ => LayerCache::Nothing,
        };
        Ok((y, cache))
    }

    /// Returns the input gradient and one gradient vector per parameter
    /// tensor, in [`Layer::params`] order.
    pub(crate) fn backward(
        &self,
        cache: &LayerCache<T>,
        dy: &Tensor4<T>,
        in_shape: [usize; 4],
    ) -> Result<(Tensor4<T>, Vec<Vec<T>>)> {
        let missing = || Error::invalid(format!("{} backward without cached activations", self.kind()));
        match self {
            Layer::Conv3x3(conv) => {
                let LayerCache::Input(x) = cache else {
                    return Err(missing());
                };
                let (dx, dw, db) = conv_backward(conv, x, dy);
                Ok((dx, vec![dw, db]))
            }
            Layer::InstanceNorm(norm) => {
                let LayerCache::Norm { xhat, inv_std } = cache else {
                    return Err(missing());
                };
                Ok(norm_backward(norm, xhat, inv_std, dy))
            }
            Layer::LeakyRelu { slope } => {
                let LayerCache::Input(x) = cache else {
                    return Err(missing());
                };
                let data = x
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&v, &g)| if v > T::zero() { g } else { g * *slope })
                    .collect();
                Ok((Tensor4::new(in_shape, data)?, Vec::new()))
            }
            Layer::PixelShuffle { factor } => Ok((pixel_unshuffle(dy, *factor)?, Vec::new())),
            Layer::SoftmaxChannels => {
                let LayerCache::Output(y) = cache else {
                    return Err(missing());
                };
                Ok((softmax_backward(y, dy), Vec::new()))
            }
        }
    }
}

fn conv_forward<T: Real>(conv: &Conv3x3<T>, x: &Tensor4<T>, out_shape: [usize; 4]) -> Tensor4<T> {
    let [_, _, h, w] = out_shape;
    let hw = h * w;
    let mut out = Tensor4::zeros(out_shape);
    out.data_mut()
        .par_chunks_mut(hw.max(1))
        .enumerate()
        .for_each(|(idx, plane)| {
            if hw == 0 {
                return;
            }
            let (b, o) = (idx / conv.out_ch, idx % conv.out_ch);
            plane.fill(conv.bias[o]);
            for i in 0..conv.in_ch {
                let src = x.plane(b, i);
                for ky in 0..3 {
                    for kx in 0..3 {
                        accumulate_tap(plane, src, h, w, ky, kx, conv.w(o, i, ky, kx));
                    }
                }
            }
        });
    out
}

fn conv_backward<T: Real>(conv: &Conv3x3<T>, x: &Tensor4<T>, dy: &Tensor4<T>) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let [n, _, h, w] = x.shape();
    let hw = h * w;

    let mut dw = vec![T::zero(); conv.weight.len()];
    dw.par_chunks_mut(conv.in_ch * 9).enumerate().for_each(|(o, chunk)| {
        for i in 0..conv.in_ch {
            for ky in 0..3 {
                for kx in 0..3 {
                    let mut acc = T::zero();
                    for b in 0..n {
                        acc += correlate_tap(dy.plane(b, o), x.plane(b, i), h, w, ky, kx);
                    }
                    chunk[(i * 3 + ky) * 3 + kx] = acc;
                }
            }
        }
    });

    let db = (0..conv.out_ch)
        .map(|o| (0..n).map(|b| dy.plane(b, o).iter().copied().sum::<T>()).sum())
        .collect();

    let mut dx = Tensor4::zeros(x.shape());
    if hw > 0 {
        dx.data_mut().par_chunks_mut(hw).enumerate().for_each(|(idx, plane)| {
            let (b, i) = (idx / conv.in_ch, idx % conv.in_ch);
            for o in 0..conv.out_ch {
                let g = dy.plane(b, o);
                for ky in 0..3 {
                    for kx in 0..3 {
                        scatter_tap(plane, g, h, w, ky, kx, conv.w(o, i, ky, kx));
                    }
                }
            }
        });
    }
    (dx, dw, db)
}

fn norm_forward<T: Real>(norm: &InstanceNorm<T>, x: &Tensor4<T>) -> (Tensor4<T>, Tensor4<T>, Vec<T>) {
    let [_, c, _, _] = x.shape();
    let hw = x.plane_len();
    let count = T::from_usize_lossy(hw.max(1));
    let eps = T::lit(NORM_EPS);
    let mut xhat = Tensor4::zeros(x.shape());
    let mut inv_std = vec![T::zero(); x.batch() * c];
    for ((idx, plane), inv) in xhat
        .data_mut()
        .chunks_mut(hw.max(1))
        .enumerate()
        .zip(inv_std.iter_mut())
    {
        let src = x.plane(idx / c, idx % c);
        let mean = src.iter().copied().sum::<T>() / count;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
        *inv = T::one() / (var + eps).sqrt();
        for (d, &s) in plane.iter_mut().zip(src) {
            *d = (s - mean) * *inv;
        }
    }
    let mut y = xhat.clone();
    for (idx, plane) in y.data_mut().chunks_mut(hw.max(1)).enumerate() {
        let ch = idx % c;
        let (g, b) = (norm.gamma[ch], norm.beta[ch]);
        for v in plane {
            *v = g * *v + b;
        }
    }
    (y, xhat, inv_std)
}

fn norm_backward<T: Real>(
    norm: &InstanceNorm<T>,
    xhat: &Tensor4<T>,
    inv_std: &[T],
    dy: &Tensor4<T>,
) -> (Tensor4<T>, Vec<Vec<T>>) {
    let c = norm.channels();
    let hw = xhat.plane_len();
    let count = T::from_usize_lossy(hw.max(1));
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    let mut dx = Tensor4::zeros(xhat.shape());
    for (idx, plane) in dx.data_mut().chunks_mut(hw.max(1)).enumerate() {
        let (b, ch) = (idx / c, idx % c);
        let xh = xhat.plane(b, ch);
        let g = dy.plane(b, ch);
        let sum_g: T = g.iter().copied().sum();
        let sum_gx: T = g.iter().zip(xh).map(|(&a, &b)| a * b).sum();
        dgamma[ch] += sum_gx;
        dbeta[ch] += sum_g;
        let k = norm.gamma[ch] * inv_std[idx] / count;
        for ((d, &gi), &xi) in plane.iter_mut().zip(g).zip(xh) {
            *d = k * (count * gi - sum_g - xi * sum_gx);
        }
    }
    (dx, vec![dgamma, dbeta])
}

/// `(b, c·r², h, w)` → `(b, c, h·r, w·r)` with
/// `out[c, y·r + i, x·r + j] = in[c·r² + i·r + j, y, x]`.
pub fn pixel_shuffle<T: Real>(x: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    let [b, c, h, w] = Layer::<T>::PixelShuffle { factor: r }.out_shape(x.shape())?;
    let mut out = Tensor4::zeros([b, c, h, w]);
    let (lh, lw) = (h / r, w / r);
    for n in 0..b {
        for ch in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let src = x.plane(n, ch * r * r + i * r + j);
                    for y in 0..lh {
                        for xx in 0..lw {
                            let o = out.offset([n, ch, y * r + i, xx * r + j]);
                            out.data_mut()[o] = src[y * lw + xx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Real>(x: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    let [b, c, h, w] = x.shape();
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::shape(format!(
            "pixel_unshuffle({r}) needs spatial size divisible by {r}, got {h}x{w}"
        )));
    }
    let (lh, lw) = (h / r, w / r);
    let mut out = Tensor4::zeros([b, c * r * r, lh, lw]);
    for n in 0..b {
        for ch in 0..c {
            for i in 0..r {
                for j in 0..r {
                    for y in 0..lh {
                        for xx in 0..lw {
                            let v = x.at([n, ch, y * r + i, xx * r + j]);
                            let o = out.offset([n, ch * r * r + i * r + j, y, xx]);
                            out.data_mut()[o] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Softmax across channels at every pixel, max-shifted for stability.
pub fn softmax_channels<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let [b, c, _, _] = x.shape();
    let hw = x.plane_len();
    let mut out = Tensor4::zeros(x.shape());
    let mut e = vec![T::zero(); c];
    for n in 0..b {
        for p in 0..hw {
            let mut m = T::neg_infinity();
            for ch in 0..c {
                m = m.max(x.data()[(n * c + ch) * hw + p]);
            }
            let mut sum = T::zero();
            for ch in 0..c {
                e[ch] = (x.data()[(n * c + ch) * hw + p] - m).exp();
                sum += e[ch];
            }
            for ch in 0..c {
                out.data_mut()[(n * c + ch) * hw + p] = e[ch] / sum;
            }
        }
    }
    out
}

fn softmax_backward<T: Real>(y: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
    let [b, c, _, _] = y.shape();
    let hw = y.plane_len();
    let mut dx = Tensor4::zeros(y.shape());
    for n in 0..b {
        for p in 0..hw {
            let at = |ch: usize| (n * c + ch) * hw + p;
            let dot: T = (0..c).map(|ch| y.data()[at(ch)] * dy.data()[at(ch)]).sum();
            for ch in 0..c {
                dx.data_mut()[at(ch)] = y.data()[at(ch)] * (dy.data()[at(ch)] - dot);
            }
        }
    }
    dx
}
