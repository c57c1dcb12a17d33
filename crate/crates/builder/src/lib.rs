//! Transfers SR oracles into LUTs by evaluating every sampled 2x2 patch.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use lutsr_core::lut::{bins_for_interval, lattice_value, ExpertBank, LutTable};
use lutsr_core::{Error, Result};

/// Largest blend toward the patch mean, reached at QP 50.
pub const QP_BLEND_MAX: f64 = 0.75;
/// Unsharp gain of the `sharpen` oracle.
pub const SHARPEN_GAIN: f64 = 0.5;
/// Highest QP label an oracle accepts.
pub const MAX_QP: u32 = 50;

/// Maps a 2x2 patch `(x, y, z, u)` = (top-left, top-right, bottom-left,
/// bottom-right) to the `r x r` upscaled patch of the top-left pixel.
pub trait SrOracle: Sync {
    fn name(&self) -> &str;
    fn scale(&self) -> usize;
    /// Degradation label (QP) the oracle is specialised for.
    fn label(&self) -> u32;
    /// Fills `out` (length `scale^2`, row-major).
    fn eval(&self, patch: [u8; 4], out: &mut [u8]) -> std::result::Result<(), String>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OracleKind {
    Nearest,
    Bilinear,
    Sharpen,
    QpAdaptive,
}

impl OracleKind {
    pub const ALL: [OracleKind; 4] = [
        OracleKind::Nearest,
        OracleKind::Bilinear,
        OracleKind::Sharpen,
        OracleKind::QpAdaptive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OracleKind::Nearest => "nearest",
            OracleKind::Bilinear => "bilinear",
            OracleKind::Sharpen => "sharpen",
            OracleKind::QpAdaptive => "qp_adaptive",
        }
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OracleKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::invalid(format!(
                "unknown oracle kind {s:?} (expected nearest, bilinear, sharpen or qp_adaptive)"
            ))
        })
    }
}

/// Closed-form oracle.
///
/// Sub-pixel `(a, b)` of the output sits at offset `(a/r, b/r)` from the
/// top-left input pixel, so `bilinear` blends the patch with weights
/// `(1-ty)(1-tx), (1-ty)tx, ty(1-tx), ty tx`.
#[derive(Clone, Debug)]
pub struct BuiltinOracle {
    kind: OracleKind,
    qp_label: u32,
    scale: usize,
    name: String,
}

impl BuiltinOracle {
    fn bilinear(&self, p: [f64; 4], a: usize, b: usize) -> f64 {
        let r = self.scale as f64;
        let (ty, tx) = (a as f64 / r, b as f64 / r);
        (1.0 - ty) * ((1.0 - tx) * p[0] + tx * p[1]) + ty * ((1.0 - tx) * p[2] + tx * p[3])
    }

    /// Blend strength toward the patch mean; zero at QP 0.
    pub fn blend(&self) -> f64 {
        QP_BLEND_MAX * f64::from(self.qp_label) / f64::from(MAX_QP)
    }
}

impl SrOracle for BuiltinOracle {
    fn name(&self) -> &str {
        &self.name
    }

    fn scale(&self) -> usize {
        self.scale
    }

    fn label(&self) -> u32 {
        self.qp_label
    }

    fn eval(&self, patch: [u8; 4], out: &mut [u8]) -> std::result::Result<(), String> {
        let r = self.scale;
        if out.len() != r * r {
            return Err(format!("output buffer {} != {}", out.len(), r * r));
        }
        let p = patch.map(f64::from);
        let mean = p.iter().sum::<f64>() / 4.0;
        let alpha = self.blend();
        for a in 0..r {
            for b in 0..r {
                let v = match self.kind {
                    OracleKind::Nearest => p[0],
                    OracleKind::Bilinear => self.bilinear(p, a, b),
                    OracleKind::Sharpen => {
                        let bil = self.bilinear(p, a, b);
                        bil + SHARPEN_GAIN * (bil - mean)
                    }
                    OracleKind::QpAdaptive => (1.0 - alpha) * self.bilinear(p, a, b) + alpha * mean,
                };
                out[a * r + b] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        Ok(())
    }
}

pub fn builtin_oracle(kind: &str, qp_label: u32, scale: usize) -> Result<BuiltinOracle> {
    let kind: OracleKind = kind.parse()?;
    if qp_label > MAX_QP {
        return Err(Error::invalid(format!("QP label {qp_label} outside [0, {MAX_QP}]")));
    }
    if scale == 0 {
        return Err(Error::invalid("scale must be >= 1"));
    }
    Ok(BuiltinOracle {
        kind,
        qp_label,
        scale,
        name: format!("{kind}@qp{qp_label}"),
    })
}

/// Oracle backed by a closure.
pub struct FnOracle<F> {
    pub name: String,
    pub scale: usize,
    pub label: u32,
    pub f: F,
}

impl<F> SrOracle for FnOracle<F>
where
    F: Fn([u8; 4], &mut [u8]) -> std::result::Result<(), String> + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn scale(&self) -> usize {
        self.scale
    }

    fn label(&self) -> u32 {
        self.label
    }

    fn eval(&self, patch: [u8; 4], out: &mut [u8]) -> std::result::Result<(), String> {
        (self.f)(patch, out)
    }
}

/// Samples `oracle` at every lattice vertex `min(i*s, 255)` of a table with
/// the given interval. Rows of the first axis are built in parallel.
pub fn build_lut(oracle: &dyn SrOracle, interval: u32) -> Result<LutTable> {
    let bins = bins_for_interval(interval)?;
    if interval < 2 {
        return Err(Error::invalid("cannot materialize the uncompressed (interval 1) table"));
    }
    let scale = oracle.scale();
    if scale == 0 {
        return Err(Error::invalid("oracle scale must be >= 1"));
    }
    let rr = scale * scale;
    let slab = bins.pow(3) * rr;
    let slabs: Vec<Result<Vec<u8>>> = (0..bins)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0u8; slab];
            let mut chunks = out.chunks_exact_mut(rr);
            for j in 0..bins {
                for k in 0..bins {
                    for l in 0..bins {
                        let patch = [i, j, k, l].map(|v| lattice_value(interval, v));
                        let dst = chunks.next().expect("slab sized for bins^3 patches");
                        oracle.eval(patch, dst).map_err(|msg| Error::Oracle {
                            index: [i, j, k, l],
                            msg,
                        })?;
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut values = Vec::with_capacity(bins * slab);
    for s in slabs {
        values.extend_from_slice(&s?);
    }
    LutTable::new(interval, scale, values)
}

/// One builtin-oracle expert per QP label.
pub fn build_bank(qp_labels: &[u32], kind: &str, interval: u32, scale: usize) -> Result<ExpertBank> {
    if qp_labels.is_empty() {
        return Err(Error::invalid("need at least one QP label"));
    }
    if qp_labels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!(
            "QP labels must be strictly increasing: {qp_labels:?}"
        )));
    }
    let luts = qp_labels
        .iter()
        .map(|&qp| build_lut(&builtin_oracle(kind, qp, scale)?, interval))
        .collect::<Result<Vec<_>>>()?;
    ExpertBank::new(luts, qp_labels.to_vec())
}
