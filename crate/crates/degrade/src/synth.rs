//! Procedural test clips: a textured scene under a slow camera pan with a
//! few independently moving objects.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lutsr_core::plane::{Frame, Plane};
use lutsr_core::{Error, Result};

struct Grating {
    freq: [f64; 2],
    phase: f64,
    amp: [f64; 3],
}

struct Blob {
    center: [f64; 2],
    radius: f64,
    velocity: [f64; 2],
    color: [f64; 3],
    square: bool,
}

struct Scene {
    base: [f64; 3],
    slope: [[f64; 3]; 2],
    gratings: Vec<Grating>,
    blobs: Vec<Blob>,
    pan: [f64; 2],
}

impl Scene {
    fn random(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Self {
        let size = width.max(height) as f64;
        let gratings = (0..6)
            .map(|_| {
                let f = rng.gen_range(0.015..0.11);
                let a = rng.gen_range(0.0..TAU);
                let amp: f64 = rng.gen_range(8.0..26.0);
                Grating {
                    freq: [f * a.cos(), f * a.sin()],
                    phase: rng.gen_range(0.0..TAU),
                    amp: [
                        amp * rng.gen_range(0.6..1.0),
                        amp * rng.gen_range(0.6..1.0),
                        amp * rng.gen_range(0.6..1.0),
                    ],
                }
            })
            .collect();
        let blobs = (0..5)
            .map(|_| Blob {
                center: [rng.gen_range(0.0..width as f64), rng.gen_range(0.0..height as f64)],
                radius: rng.gen_range(0.08..0.22) * size,
                velocity: [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
                color: [
                    rng.gen_range(20.0..235.0),
                    rng.gen_range(20.0..235.0),
                    rng.gen_range(20.0..235.0),
                ],
                square: rng.gen_bool(0.5),
            })
            .collect();
        Self {
            base: [
                rng.gen_range(70.0..180.0),
                rng.gen_range(70.0..180.0),
                rng.gen_range(70.0..180.0),
            ],
            slope: [
                [
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                ],
                [
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                ],
            ],
            gratings,
            blobs,
            pan: [rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0)],
        }
    }

    fn sample(&self, x: f64, y: f64, t: f64) -> [f64; 3] {
        let (wx, wy) = (x + self.pan[0] * t, y + self.pan[1] * t);
        let mut c = [0.0; 3];
        for (ch, v) in c.iter_mut().enumerate() {
            *v = self.base[ch] + self.slope[0][ch] * wx * 0.5 + self.slope[1][ch] * wy * 0.5;
        }
        for g in &self.gratings {
            let s = (TAU * (g.freq[0] * wx + g.freq[1] * wy) + g.phase).sin();
            for ch in 0..3 {
                c[ch] += g.amp[ch] * s;
            }
        }
        for b in &self.blobs {
            let cx = b.center[0] + b.velocity[0] * t;
            let cy = b.center[1] + b.velocity[1] * t;
            let (dx, dy) = (x - cx, y - cy);
            let inside = if b.square {
                dx.abs() < b.radius && dy.abs() < b.radius
            } else {
                dx * dx + dy * dy < b.radius * b.radius
            };
            if inside {
                let stripes = ((dx + dy) * 0.35).sin() * 18.0;
                for ch in 0..3 {
                    c[ch] = b.color[ch] + stripes;
                }
            }
        }
        c
    }
}

/// `frames` RGB frames of `width × height`, fully determined by `seed`.
/// Each pixel averages a 3×3 grid of sub-samples.
pub fn synth_clip(frames: usize, width: usize, height: usize, seed: u64) -> Result<Vec<Frame>> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("clip size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = Scene::random(width, height, &mut rng);
    let offs = [-1.0 / 3.0, 0.0, 1.0 / 3.0];
    (0..frames)
        .map(|t| {
            let mut planes = [
                Plane::filled(width, height, 0u8),
                Plane::filled(width, height, 0u8),
                Plane::filled(width, height, 0u8),
            ];
            for y in 0..height {
                for x in 0..width {
                    let mut acc = [0.0; 3];
                    for oy in offs {
                        for ox in offs {
                            let s = scene.sample(x as f64 + 0.5 + ox, y as f64 + 0.5 + oy, t as f64);
                            for ch in 0..3 {
                                acc[ch] += s[ch];
                            }
                        }
                    }
                    for ch in 0..3 {
                        planes[ch].set(x, y, (acc[ch] / 9.0).round().clamp(0.0, 255.0) as u8);
                    }
                }
            }
            Frame::new(planes.to_vec())
        })
        .collect()
}
