use lutsr_core::plane::{Frame, Plane};
use lutsr_core::{Error, Result};

pub const DOWNSCALE: usize = 4;
const A: f64 = -0.5;

/// Keys cubic kernel with `a = -0.5`.
pub fn cubic(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Source taps and normalized weights for each output sample along one axis.
/// The kernel is stretched by the factor (antialiasing) and taps outside the
/// image are clamped to the edge.
pub fn axis_weights(len_in: usize, factor: usize) -> Vec<Vec<(usize, f64)>> {
    let f = factor as f64;
    let support = 2.0 * f;
    (0..len_in / factor)
        .map(|i| {
            let center = (i as f64 + 0.5) * f - 0.5;
            let first = (center - support).floor() as isize + 1;
            let last = (center + support).ceil() as isize - 1;
            let mut taps: Vec<(usize, f64)> = (first..=last)
                .map(|j| {
                    let w = cubic((center - j as f64) / f);
                    (j.clamp(0, len_in as isize - 1) as usize, w)
                })
                .filter(|&(_, w)| w != 0.0)
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Antialiased bicubic downscale by 4, separable, rounded once at the end.
pub fn downsample_bicubic(hr: &Plane<u8>) -> Result<Plane<u8>> {
    let (w, h) = (hr.width(), hr.height());
    if w == 0 || h == 0 || w % DOWNSCALE != 0 || h % DOWNSCALE != 0 {
        return Err(Error::invalid(format!("frame {w}x{h} is not divisible by {DOWNSCALE}")));
    }
    let wx = axis_weights(w, DOWNSCALE);
    let wy = axis_weights(h, DOWNSCALE);
    let (ow, oh) = (w / DOWNSCALE, h / DOWNSCALE);
    let mut horiz = vec![0.0f64; ow * h];
    for y in 0..h {
        let row = hr.row(y);
        for (x, taps) in wx.iter().enumerate() {
            horiz[y * ow + x] = taps.iter().map(|&(j, k)| k * f64::from(row[j])).sum();
        }
    }
    let mut out = vec![0u8; ow * oh];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..ow {
            let v: f64 = taps.iter().map(|&(j, k)| k * horiz[j * ow + x]).sum();
            out[y * ow + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Plane::new(ow, oh, out)
}

pub fn downsample_frame(hr: &Frame) -> Result<Frame> {
    Frame::new(hr.planes().iter().map(downsample_bicubic).collect::<Result<_>>()?)
}
