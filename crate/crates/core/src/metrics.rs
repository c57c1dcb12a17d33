//! PSNR and SSIM.

use serde_json::Value;

use crate::plane::{Frame, Plane};
use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const PEAK: f64 = 255.0;

/// Mean squared error over every sample of two equally sized sample slices.
fn mse(a: &[u8], b: &[u8]) -> f64 {
    let sum: u64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum();
    sum as f64 / a.len().max(1) as f64
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// `10·log10(255² / MSE)`; identical inputs give `f64::INFINITY`.
pub fn psnr(a: &Plane<u8>, b: &Plane<u8>) -> Result<f64> {
    if !a.same_size(b) {
        return Err(size_error(a, b));
    }
    Ok(psnr_from_mse(mse(a.data(), b.data())))
}

/// PSNR over all channels of a frame.
pub fn psnr_frame(a: &Frame, b: &Frame) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, q) in a.planes().iter().zip(b.planes()) {
        sum += mse(p.data(), q.data()) * p.data().len() as f64;
        n += p.data().len();
    }
    Ok(psnr_from_mse(sum / n.max(1) as f64))
}

/// JSON form of a PSNR: a number, or the string `"inf"` for identical inputs.
pub fn psnr_json(v: f64) -> Value {
    if v.is_infinite() {
        Value::String("inf".into())
    } else {
        serde_json::json!(v)
    }
}

fn size_error<T: Copy, U: Copy>(a: &Plane<T>, b: &Plane<U>) -> Error {
    Error::shape(format!("{}x{} vs {}x{}", a.width(), a.height(), b.width(), b.height()))
}

/// Normalized 11×11 Gaussian taps, σ = 1.5.
pub fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            w[y * SSIM_WINDOW + x] = g[y] * g[x];
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean SSIM over all fully contained 11×11 windows.
pub fn ssim_plane(a: &Plane<f64>, b: &Plane<f64>) -> Result<f64> {
    if !a.same_size(b) {
        return Err(size_error(a, b));
    }
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let win = gaussian_window();
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for y0 in 0..oh {
        for x0 in 0..ow {
            let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                let ra = &a.row(y0 + dy)[x0..x0 + SSIM_WINDOW];
                let rb = &b.row(y0 + dy)[x0..x0 + SSIM_WINDOW];
                let wr = &win[dy * SSIM_WINDOW..(dy + 1) * SSIM_WINDOW];
                for i in 0..SSIM_WINDOW {
                    let (p, q, g) = (ra[i], rb[i], wr[i]);
                    ma += g * p;
                    mb += g * q;
                    aa += g * (p * p);
                    bb += g * (q * q);
                    ab += g * (p * q);
                }
            }
            let va = aa - ma * ma;
            let vb = bb - mb * mb;
            let cov = ab - ma * mb;
            total += ((2.0 * (ma * mb) + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (ow * oh) as f64)
}

pub fn ssim(a: &Plane<u8>, b: &Plane<u8>) -> Result<f64> {
    ssim_plane(&a.map(f64::from), &b.map(f64::from))
}

/// SSIM of the (unrounded) luma of two frames.
pub fn ssim_frame(a: &Frame, b: &Frame) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::shape("frames differ in shape"));
    }
    ssim_plane(&a.luma_f64(), &b.luma_f64())
}
