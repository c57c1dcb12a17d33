//! Latency harness for the interpolation paths.
//!
//! Every timed mode is first checked against an independently computed
//! counterpart with the same semantics on the exact frame being timed.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use lutsr_core::fusion::{
    fused_query, rotate90, spatial_branch_with_weights, srlut_rotation_ensemble, upscale_lut, upscale_with,
    upscale_with_mut, FusedBank, WeightMap,
};
use lutsr_core::interp::{
    tetra_interp_reference_into, tetralinear_interp_into, FastLut, NoProbe, OpCounts, OrderTable,
};
use lutsr_core::lut::{bins_for_interval, ExpertBank, LutTable};
use lutsr_core::plane::Plane;
use lutsr_core::{Error, Result};

pub const BENCH_EXPERTS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchMode {
    ReferenceBranchy,
    OrderTable,
    Tetralinear,
    FusedN6,
    SrlutRot4,
}

impl BenchMode {
    pub const ALL: [BenchMode; 5] = [
        BenchMode::ReferenceBranchy,
        BenchMode::OrderTable,
        BenchMode::Tetralinear,
        BenchMode::FusedN6,
        BenchMode::SrlutRot4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMode::ReferenceBranchy => "reference_branchy",
            BenchMode::OrderTable => "order_table",
            BenchMode::Tetralinear => "tetralinear",
            BenchMode::FusedN6 => "fused_n6",
            BenchMode::SrlutRot4 => "srlut_rot4",
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|m| m.name()).collect();
            Error::invalid(format!(
                "unknown bench mode {s:?} (expected one of {})",
                names.join(", ")
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub mode: BenchMode,
    pub width: usize,
    pub height: usize,
    pub iters: usize,
    pub warmup: usize,
    pub threads: usize,
    pub interval: u32,
    pub scale: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(mode: BenchMode) -> Self {
        Self {
            mode,
            width: 320,
            height: 180,
            iters: 10,
            warmup: 2,
            threads: 1,
            interval: 16,
            scale: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub mode: String,
    pub width: usize,
    pub height: usize,
    pub scale: usize,
    pub interval: u32,
    pub iters: usize,
    pub warmup: usize,
    pub threads: usize,
    pub min_ms: f64,
    pub median_ms: f64,
    pub mean_ms: f64,
    /// Frames per second at the median time.
    pub fps: f64,
    /// Vertex reads and weight multiplications per output subpixel.
    pub fetches_per_subpixel: f64,
    pub muls_per_subpixel: f64,
    /// Modes whose output was checked byte-equal before timing.
    pub verified_against: Vec<String>,
    /// Hash of the output bytes, for cross-run and cross-thread comparison.
    pub output_digest: String,
}

/// Fixed-seed inputs shared by every mode: a random frame, a random
/// 6-expert bank and a random simplex weight map.
pub struct BenchFixture {
    pub lr: Plane<u8>,
    pub bank: ExpertBank,
    pub table: OrderTable,
    pub weights: WeightMap<f32>,
}

impl BenchFixture {
    pub fn new(width: usize, height: usize, interval: u32, scale: usize, seed: u64) -> Result<Self> {
        if width == 0 || height == 0 || scale == 0 {
            return Err(Error::invalid("bench size and scale must be positive"));
        }
        let table = OrderTable::build(interval)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_values = bins_for_interval(interval)?.pow(4) * scale * scale;
        let luts = (0..BENCH_EXPERTS)
            .map(|_| LutTable::new(interval, scale, (0..n_values).map(|_| rng.gen()).collect()))
            .collect::<Result<Vec<_>>>()?;
        let bank = ExpertBank::new(luts, (0..BENCH_EXPERTS as u32).map(|k| k * 10).collect())?;
        let lr = Plane::from_fn(width, height, |_, _| rng.gen());
        let mut w = Vec::with_capacity(width * height * BENCH_EXPERTS);
        for _ in 0..width * height {
            let raw: [f32; BENCH_EXPERTS] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
            let sum: f32 = raw.iter().sum();
            w.extend(raw.iter().map(|v| v / sum));
        }
        let weights = WeightMap::new(width, height, BENCH_EXPERTS, w)?;
        Ok(Self {
            lr,
            bank,
            table,
            weights,
        })
    }

    fn lut(&self) -> &LutTable {
        &self.bank.luts()[0]
    }

    /// The timed computation of `mode`.
    pub fn run(&self, mode: BenchMode) -> Result<Plane<u8>> {
        let lut = self.lut();
        match mode {
            BenchMode::ReferenceBranchy => upscale_with(&self.lr, lut.scale(), |_, _, px, tile| {
                tetra_interp_reference_into(lut, px, tile, &mut NoProbe)
            }),
            BenchMode::OrderTable => upscale_lut(lut, &self.table, &self.lr),
            BenchMode::Tetralinear => upscale_with(&self.lr, lut.scale(), |_, _, px, tile| {
                tetralinear_interp_into(lut, px, tile, &mut NoProbe)
            }),
            BenchMode::FusedN6 => spatial_branch_with_weights(&self.bank, &self.table, &self.weights, &self.lr),
            BenchMode::SrlutRot4 => srlut_rotation_ensemble(lut, &self.table, &self.lr),
        }
    }

    /// Independent outputs with the semantics of `mode`, labelled.
    fn counterparts(&self, mode: BenchMode) -> Result<Vec<(String, Plane<u8>)>> {
        let lut = self.lut();
        Ok(match mode {
            BenchMode::ReferenceBranchy => vec![("order_table".into(), self.run(BenchMode::OrderTable)?)],
            BenchMode::OrderTable => vec![("reference_branchy".into(), self.run(BenchMode::ReferenceBranchy)?)],
            BenchMode::Tetralinear => Vec::new(),
            BenchMode::FusedN6 => {
                let r = self.bank.scale();
                let out = upscale_with(&self.lr, r, |x, y, px, tile| {
                    let v = fused_query(&self.bank, self.weights.at(x, y), px, &self.table).expect("fused query");
                    tile.copy_from_slice(&v);
                })?;
                vec![("fused_cell".into(), out)]
            }
            BenchMode::SrlutRot4 => {
                let r = lut.scale();
                let mut acc = vec![0u32; self.lr.width() * r * self.lr.height() * r];
                for k in 0..4 {
                    let up = upscale_with(&rotate90(&self.lr, k), r, |_, _, px, tile| {
                        tetra_interp_reference_into(lut, px, tile, &mut NoProbe)
                    })?;
                    for (a, &v) in acc.iter_mut().zip(rotate90(&up, (4 - k) % 4).data()) {
                        *a += u32::from(v);
                    }
                }
                let data = acc.into_iter().map(|v| ((v + 2) / 4) as u8).collect();
                vec![(
                    "reference_rot4".into(),
                    Plane::new(self.lr.width() * r, self.lr.height() * r, data)?,
                )]
            }
        })
    }

    /// Operation counts per output subpixel, measured on the first row.
    fn op_counts(&self, mode: BenchMode) -> Result<(f64, f64)> {
        let lut = self.lut();
        let row = self.lr.crop(0, 0, self.lr.width(), 1)?;
        let mut c = OpCounts::default();
        match mode {
            BenchMode::ReferenceBranchy => {
                upscale_with_mut(&row, lut.scale(), |_, _, px, t| {
                    tetra_interp_reference_into(lut, px, t, &mut c)
                })?;
            }
            BenchMode::OrderTable => {
                let f = FastLut::new(lut, &self.table)?;
                upscale_with_mut(&row, lut.scale(), |_, _, px, t| f.query_into(px, t, &mut c))?;
            }
            BenchMode::Tetralinear => {
                upscale_with_mut(&row, lut.scale(), |_, _, px, t| {
                    tetralinear_interp_into(lut, px, t, &mut c)
                })?;
            }
            BenchMode::FusedN6 => {
                let f = FusedBank::new(&self.bank, &self.table)?;
                upscale_with_mut(&row, lut.scale(), |x, _, px, t| {
                    f.query_into(px, self.weights.at(x, 0), t, &mut c)
                })?;
            }
            BenchMode::SrlutRot4 => {
                lutsr_core::fusion::srlut_rotation_ensemble_counted(lut, &self.table, &row, &mut c)?;
            }
        }
        let sub = (row.width() * lut.patch_len()) as f64;
        Ok((c.fetches as f64 / sub, c.muls as f64 / sub))
    }
}

pub fn digest(p: &Plane<u8>) -> String {
    let mut h = std::hash::DefaultHasher::new();
    (p.width(), p.height()).hash(&mut h);
    p.data().hash(&mut h);
    format!("{:016x}", h.finish())
}

/// `(min, median, mean)` of a non-empty sample.
pub fn summarize(samples: &[f64]) -> (f64, f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    };
    (s[0], median, s.iter().sum::<f64>() / n as f64)
}

pub fn bench_with_fixture(fixture: &BenchFixture, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.iters == 0 || cfg.threads == 0 {
        return Err(Error::invalid("iters and threads must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        let out = fixture.run(cfg.mode)?;
        let mut verified = Vec::new();
        for (name, other) in fixture.counterparts(cfg.mode)? {
            if other != out {
                let diff = out.data().iter().zip(other.data()).filter(|(a, b)| a != b).count();
                return Err(Error::invalid(format!(
                    "{} disagrees with {name} on {diff} samples; refusing to time",
                    cfg.mode
                )));
            }
            verified.push(name);
        }
        let (fetches, muls) = fixture.op_counts(cfg.mode)?;
        for _ in 0..cfg.warmup {
            fixture.run(cfg.mode)?;
        }
        let mut times = Vec::with_capacity(cfg.iters);
        for _ in 0..cfg.iters {
            let t = Instant::now();
            let o = fixture.run(cfg.mode)?;
            times.push(t.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(o);
        }
        let (min_ms, median_ms, mean_ms) = summarize(&times);
        Ok(BenchReport {
            mode: cfg.mode.name().into(),
            width: cfg.width,
            height: cfg.height,
            scale: cfg.scale,
            interval: cfg.interval,
            iters: cfg.iters,
            warmup: cfg.warmup,
            threads: cfg.threads,
            min_ms,
            median_ms,
            mean_ms,
            fps: 1e3 / median_ms,
            fetches_per_subpixel: fetches,
            muls_per_subpixel: muls,
            verified_against: verified,
            output_digest: digest(&out),
        })
    })
}

pub fn bench_interp(cfg: &BenchConfig) -> Result<BenchReport> {
    let fixture = BenchFixture::new(cfg.width, cfg.height, cfg.interval, cfg.scale, cfg.seed)?;
    bench_with_fixture(&fixture, cfg)
}
