//! Clip simulation and the on-disk dataset layout.
//!
//! A dataset directory holds `dataset.json`, `samples.jsonl`,
//! `manifest.jsonl`, `hr_NNNNN.png` for every frame and `lr_NNNNN.png` for
//! every received frame.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::abr::{abr_controller, bandwidth_trace, frame_sizes, modulated_map, texture_offsets, AbrDecision, Profile};
use super::bicubic::{downsample_frame, DOWNSCALE};
use super::dct::{compress_frame, QpMap};
use super::motion::block_match_motion;
use lutsr_core::metrics::psnr_frame;
use lutsr_core::plane::Frame;
use lutsr_core::temporal::{MotionField, MACRO_BLOCK, SEARCH_RADIUS};
use lutsr_core::{Error, Result};

pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum RateControl {
    Profile(Profile),
    Trace(Vec<u64>),
    /// Cycle through these QPs frame by frame; nothing is dropped.
    FixedQp(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub rate: RateControl,
    pub fps: f64,
    pub seed: u64,
    /// Apply the ±5 texture QP modulation (ignored for fixed QP).
    pub modulation: bool,
}

impl SimConfig {
    pub fn profile(profile: Profile, seed: u64) -> Self {
        Self {
            rate: RateControl::Profile(profile),
            fps: super::abr::DEFAULT_FPS,
            seed,
            modulation: true,
        }
    }

    pub fn fixed(qps: Vec<u8>, seed: u64) -> Self {
        Self {
            rate: RateControl::FixedQp(qps),
            fps: super::abr::DEFAULT_FPS,
            seed,
            modulation: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamSample {
    pub index: usize,
    pub hr: Frame,
    pub clean_lr: Frame,
    /// Degraded LR; `None` when dropped.
    pub lr: Option<Frame>,
    pub qp_map: Option<QpMap>,
    /// Motion from the previous received frame (zero for the first).
    pub motion: MotionField,
    pub prev: Option<usize>,
    pub psnr: Option<f64>,
    pub decision: Option<AbrDecision>,
}

impl StreamSample {
    pub fn dropped(&self) -> bool {
        self.lr.is_none()
    }
}

/// Degrade a clip in memory.
pub fn simulate(hr: &[Frame], cfg: &SimConfig) -> Result<Vec<StreamSample>> {
    let Some(first) = hr.first() else {
        return Ok(Vec::new());
    };
    if hr.iter().any(|f| !f.same_shape(first)) {
        return Err(Error::shape("clip frames differ in size or channel count"));
    }
    let clean: Vec<Frame> = hr.par_iter().map(downsample_frame).collect::<Result<_>>()?;
    let (lw, lh) = (clean[0].width(), clean[0].height());
    let lumas: Vec<_> = clean.iter().map(Frame::luma).collect();

    let (qps, decisions): (Vec<Option<u8>>, Vec<Option<AbrDecision>>) = match &cfg.rate {
        RateControl::FixedQp(list) => {
            if list.is_empty() {
                return Err(Error::invalid("fixed QP list is empty"));
            }
            if let Some(q) = list.iter().find(|&&q| q > super::dct::MAX_QP) {
                return Err(Error::invalid(format!("QP {q} outside [0, 50]")));
            }
            (
                (0..hr.len()).map(|i| Some(list[i % list.len()])).collect(),
                vec![None; hr.len()],
            )
        }
        rate => {
            let trace = match rate {
                RateControl::Profile(p) => bandwidth_trace(*p, hr.len(), cfg.fps, lw * lh, cfg.seed),
                RateControl::Trace(t) => t.clone(),
                RateControl::FixedQp(_) => unreachable!(),
            };
            let sizes: Vec<_> = lumas
                .par_iter()
                .map(|l| {
                    let off = cfg.modulation.then(|| texture_offsets(l));
                    frame_sizes(std::slice::from_ref(l), off.as_deref())
                })
                .collect();
            let d = abr_controller(&trace, &sizes)?;
            (d.iter().map(|d| d.qp).collect(), d.into_iter().map(Some).collect())
        }
    };
    let modulate = cfg.modulation && !matches!(cfg.rate, RateControl::FixedQp(_));

    let mut prev: Option<usize> = None;
    let mut links = Vec::with_capacity(hr.len());
    for q in &qps {
        links.push(prev);
        if q.is_some() {
            prev = Some(links.len() - 1);
        }
    }

    (0..hr.len())
        .into_par_iter()
        .map(|i| {
            let map = qps[i].map(|q| {
                let off = modulate.then(|| texture_offsets(&lumas[i]));
                modulated_map(lw, lh, q, off.as_deref())
            });
            let lr = map.as_ref().map(|m| compress_frame(&clean[i], m)).transpose()?;
            let psnr = lr.as_ref().map(|l| psnr_frame(l, &clean[i])).transpose()?;
            let motion = match links[i] {
                Some(p) => block_match_motion(&lumas[p], &lumas[i], MACRO_BLOCK, SEARCH_RADIUS)?,
                None => MotionField::zeros(lw, lh, MACRO_BLOCK, SEARCH_RADIUS),
            };
            Ok(StreamSample {
                index: i,
                hr: hr[i].clone(),
                clean_lr: clean[i].clone(),
                lr,
                qp_map: map,
                motion,
                prev: links[i],
                psnr,
                decision: decisions[i],
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub index: usize,
    pub qp_mean: Option<f64>,
    pub dropped: bool,
    /// Degraded vs clean LR; `"inf"` when identical.
    pub psnr: serde_json::Value,
    pub qp_modulation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub dropped: bool,
    pub prev: Option<usize>,
    pub qp: Option<u8>,
    pub qp_map: Option<QpMap>,
    pub motion: MotionField,
    pub abr: Option<AbrDecision>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub lr_width: usize,
    pub lr_height: usize,
    pub channels: usize,
    pub scale: usize,
    pub fps: f64,
    pub seed: u64,
    /// `"100kbps"`, `"500kbps"`, `"1mbps"`, `"trace"` or `"fixed"`.
    pub rate: String,
    pub fixed_qp: Option<Vec<u8>>,
    pub macro_block: usize,
    pub search_radius: u32,
    pub qp_modulation: String,
}

fn modulation_label(cfg: &SimConfig) -> &'static str {
    if cfg.modulation && !matches!(cfg.rate, RateControl::FixedQp(_)) {
        "synthetic"
    } else {
        "none"
    }
}

pub fn manifest_records(samples: &[StreamSample], cfg: &SimConfig) -> Vec<ManifestRecord> {
    samples
        .iter()
        .map(|s| ManifestRecord {
            index: s.index,
            qp_mean: s.qp_map.as_ref().map(QpMap::mean),
            dropped: s.dropped(),
            psnr: s.psnr.map_or(serde_json::Value::Null, lutsr_core::metrics::psnr_json),
            qp_modulation: modulation_label(cfg).into(),
        })
        .collect()
}

pub fn hr_name(i: usize) -> String {
    format!("hr_{i:05}.png")
}

pub fn lr_name(i: usize) -> String {
    format!("lr_{i:05}.png")
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it)?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

pub fn write_dataset(
    samples: &[StreamSample],
    cfg: &SimConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestRecord>> {
    let out = out_dir.as_ref();
    fs::create_dir_all(out)?;
    let first = samples.first();
    let meta = DatasetMeta {
        version: DATASET_VERSION,
        frames: samples.len(),
        width: first.map_or(0, |s| s.hr.width()),
        height: first.map_or(0, |s| s.hr.height()),
        lr_width: first.map_or(0, |s| s.clean_lr.width()),
        lr_height: first.map_or(0, |s| s.clean_lr.height()),
        channels: first.map_or(0, |s| s.hr.channels()),
        scale: DOWNSCALE,
        fps: cfg.fps,
        seed: cfg.seed,
        rate: match &cfg.rate {
            RateControl::Profile(p) => p.name().into(),
            RateControl::Trace(_) => "trace".into(),
            RateControl::FixedQp(_) => "fixed".into(),
        },
        fixed_qp: match &cfg.rate {
            RateControl::FixedQp(q) => Some(q.clone()),
            _ => None,
        },
        macro_block: MACRO_BLOCK,
        search_radius: SEARCH_RADIUS,
        qp_modulation: modulation_label(cfg).into(),
    };
    fs::write(out.join("dataset.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    samples.par_iter().try_for_each(|s| -> Result<()> {
        s.hr.save_png(out.join(hr_name(s.index)))?;
        if let Some(lr) = &s.lr {
            lr.save_png(out.join(lr_name(s.index)))?;
        }
        Ok(())
    })?;
    let records: Vec<SampleRecord> = samples
        .iter()
        .map(|s| SampleRecord {
            index: s.index,
            dropped: s.dropped(),
            prev: s.prev,
            qp: s
                .qp_map
                .as_ref()
                .and(s.decision.and_then(|d| d.qp))
                .or_else(|| match &cfg.rate {
                    RateControl::FixedQp(l) => Some(l[s.index % l.len()]),
                    _ => None,
                }),
            qp_map: s.qp_map.clone(),
            motion: s.motion.clone(),
            abr: s.decision,
        })
        .collect();
    write_jsonl(&out.join("samples.jsonl"), &records)?;
    let manifest = manifest_records(samples, cfg);
    write_jsonl(&out.join("manifest.jsonl"), &manifest)?;
    Ok(manifest)
}

/// PNG files directly inside `dir`, sorted by name.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Read every PNG in `hr_dir`, degrade the sequence and write the dataset.
pub fn generate_dataset(
    hr_dir: impl AsRef<Path>,
    cfg: &SimConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestRecord>> {
    let frames: Vec<Frame> = list_frames(hr_dir)?
        .par_iter()
        .map(Frame::load_png)
        .collect::<Result<_>>()?;
    let samples = simulate(&frames, cfg)?;
    write_dataset(&samples, cfg, out_dir)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSample {
    pub index: usize,
    pub hr: Frame,
    pub lr: Option<Frame>,
    pub prev: Option<usize>,
    pub qp_map: Option<QpMap>,
    pub motion: MotionField,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<DatasetSample>,
    pub manifest: Vec<ManifestRecord>,
}

impl Dataset {
    pub fn received(&self) -> impl Iterator<Item = &DatasetSample> {
        self.samples.iter().filter(|s| s.lr.is_some())
    }

    pub fn sample(&self, index: usize) -> Option<&DatasetSample> {
        self.samples.iter().find(|s| s.index == index)
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join("dataset.json"))?)?;
    if meta.version != DATASET_VERSION {
        return Err(Error::invalid(format!("unsupported dataset version {}", meta.version)));
    }
    let records: Vec<SampleRecord> = read_jsonl(&dir.join("samples.jsonl"))?;
    let manifest: Vec<ManifestRecord> = read_jsonl(&dir.join("manifest.jsonl"))?;
    if records.len() != meta.frames || manifest.len() != meta.frames {
        return Err(Error::invalid(format!(
            "dataset.json lists {} frames, samples.jsonl has {}, manifest.jsonl has {}",
            meta.frames,
            records.len(),
            manifest.len()
        )));
    }
    if records.windows(2).any(|w| w[1].index <= w[0].index) {
        return Err(Error::invalid("sample indices are not strictly increasing"));
    }
    let samples = records
        .into_par_iter()
        .map(|r| {
            let hr = Frame::load_png(dir.join(hr_name(r.index)))?;
            let lr = if r.dropped {
                None
            } else {
                Some(Frame::load_png(dir.join(lr_name(r.index)))?)
            };
            Ok(DatasetSample {
                index: r.index,
                hr,
                lr,
                prev: r.prev,
                qp_map: r.qp_map,
                motion: r.motion,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        meta,
        samples,
        manifest,
    })
}
