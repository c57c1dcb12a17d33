//! Joint training of the weight predictor and the temporal branch.
//!
//! The fused output is linear in the fusion weights, so the spatial branch
//! is differentiated by hand: `∂out/∂W_k = E_k`, the unrounded interpolation
//! of expert `k` at that subpixel. Training runs on single-channel luma
//! patches; expert LUTs stay frozen unless `finetune_luts` is set.

#![allow(clippy::needless_range_loop)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use lutsr_core::fusion::{upscale_lut, FusedBank};
use lutsr_core::interp::OrderTable;
use lutsr_core::lut::ExpertBank;
use lutsr_core::metrics::{psnr, psnr_frame, psnr_json, ssim_frame};
use lutsr_core::model::ConvLut;
use lutsr_core::nnet::{charbonnier_loss, Adam, Grads, Tensor4};
use lutsr_core::plane::{Frame, Plane};
use lutsr_core::temporal::{temporal_input, MotionField};
use lutsr_core::{Error, Real, Result};
use lutsr_degrade::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// LR patch side; clamped to the frame size.
    pub patch: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Charbonnier epsilon.
    pub eps: f64,
    pub finetune_luts: bool,
    /// Random crops drawn from every training frame per epoch.
    pub crops_per_frame: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch: 48,
            batch: 16,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 10,
            seed: 0,
            eps: 1e-3,
            finetune_luts: false,
            crops_per_frame: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch < 2 {
            return Err(Error::invalid("patch size must be at least 2"));
        }
        if self.batch == 0 || self.crops_per_frame == 0 {
            return Err(Error::invalid("batch size and crops per frame must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("learning rate and eps must be positive"));
        }
        for b in [self.beta1, self.beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("Adam beta {b} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// One received frame prepared for training: luma planes plus the full-frame
/// temporal input.
#[derive(Clone, Debug)]
pub struct TrainFrame<T> {
    pub index: usize,
    pub lr: Plane<u8>,
    pub hr: Plane<u8>,
    pub prev: Option<Plane<u8>>,
    pub motion: Option<MotionField>,
    temporal_in: Tensor4<T>,
}

impl<T: Real> TrainFrame<T> {
    pub fn new(
        index: usize,
        lr: Plane<u8>,
        hr: Plane<u8>,
        prev: Option<Plane<u8>>,
        motion: Option<MotionField>,
        scale: usize,
    ) -> Result<Self> {
        if (hr.width(), hr.height()) != (lr.width() * scale, lr.height() * scale) {
            return Err(Error::shape(format!(
                "frame {index}: HR {}x{} is not {scale}x LR {}x{}",
                hr.width(),
                hr.height(),
                lr.width(),
                lr.height()
            )));
        }
        let temporal_in = temporal_input(&lr, prev.as_ref(), motion.as_ref())?;
        Ok(Self {
            index,
            lr,
            hr,
            prev,
            motion,
            temporal_in,
        })
    }
}

/// Luma training frames for every received sample of a dataset.
pub fn training_frames<T: Real>(ds: &Dataset, scale: usize) -> Result<Vec<TrainFrame<T>>> {
    ds.received()
        .map(|s| {
            let lr = s.lr.as_ref().expect("received").luma();
            let prev = s
                .prev
                .and_then(|p| ds.sample(p))
                .and_then(|p| p.lr.as_ref())
                .map(Frame::luma);
            TrainFrame::new(s.index, lr, s.hr.luma(), prev, Some(s.motion.clone()), scale)
        })
        .collect()
}

/// Frames held out for validation: the last quarter (rounded up), or none
/// when there is a single frame.
pub fn validation_count(n: usize) -> usize {
    if n < 2 {
        0
    } else {
        n.div_ceil(4)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Crop {
    pub frame: usize,
    pub x0: usize,
    pub y0: usize,
}

/// Per-pixel expert interpolations of a batch, `[b][y][x][k][sub]`, and the
/// simplex each pixel queried.
#[derive(Clone, Debug)]
pub struct ExpertValues<T> {
    pub experts: usize,
    pub patch_len: usize,
    pub values: Vec<T>,
    pub simplex: Vec<([usize; 5], [u32; 5])>,
}

#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub patch: usize,
    pub scale: usize,
    pub pred_in: Tensor4<T>,
    pub temp_in: Tensor4<T>,
    pub target: Tensor4<T>,
    pub experts: ExpertValues<T>,
}

pub fn make_batch<T: Real>(
    frames: &[TrainFrame<T>],
    crops: &[Crop],
    patch: usize,
    fused: &FusedBank,
) -> Result<Batch<T>> {
    let rr = fused.patch_len();
    let scale = (rr as f64).sqrt().round() as usize;
    let n = fused.experts();
    let (b, p, rp) = (crops.len(), patch, patch * scale);
    let k255 = T::lit(1.0 / 255.0);
    let mut pred = Vec::with_capacity(b * p * p);
    let mut temp = Vec::with_capacity(b * 4 * p * p);
    let mut target = Vec::with_capacity(b * rp * rp);
    let mut values = vec![T::zero(); b * p * p * n * rr];
    let mut simplex = Vec::with_capacity(b * p * p);
    for (bi, c) in crops.iter().enumerate() {
        let f = &frames[c.frame];
        if c.x0 + p > f.lr.width() || c.y0 + p > f.lr.height() {
            return Err(Error::shape(format!("crop {c:?} of size {p} leaves frame {}", f.index)));
        }
        for y in 0..p {
            pred.extend(
                f.lr.row(c.y0 + y)[c.x0..c.x0 + p]
                    .iter()
                    .map(|&v| T::lit(f64::from(v)) * k255),
            );
        }
        for ch in 0..4 {
            let plane = f.temporal_in.plane(0, ch);
            for y in 0..p {
                let row = (c.y0 + y) * f.lr.width() + c.x0;
                temp.extend_from_slice(&plane[row..row + p]);
            }
        }
        for y in 0..rp {
            let row = &f.hr.row(c.y0 * scale + y)[c.x0 * scale..c.x0 * scale + rp];
            target.extend(row.iter().map(|&v| T::lit(f64::from(v)) * k255));
        }
        for y in 0..p {
            for x in 0..p {
                let px = lutsr_core::fusion::query_patch(&f.lr, c.x0 + x, c.y0 + y);
                let at = ((bi * p + y) * p + x) * n * rr;
                fused.expert_values_into(px, &mut values[at..at + n * rr]);
                simplex.push(fused.simplex(px));
            }
        }
    }
    Ok(Batch {
        patch,
        scale,
        pred_in: Tensor4::new([b, 1, p, p], pred)?,
        temp_in: Tensor4::new([b, 4, p, p], temp)?,
        target: Tensor4::new([b, 1, rp, rp], target)?,
        experts: ExpertValues {
            experts: n,
            patch_len: rr,
            values,
            simplex,
        },
    })
}

/// `Σ_k W_k · E_k / 255` laid out as a `(b, 1, r·p, r·p)` tensor.
pub fn fused_forward<T: Real>(weights: &Tensor4<T>, ev: &ExpertValues<T>, scale: usize) -> Result<Tensor4<T>> {
    let [b, n, p, pw] = weights.shape();
    if n != ev.experts || p != pw || ev.values.len() != b * p * p * n * ev.patch_len {
        return Err(Error::shape(format!(
            "weights {:?} do not match expert values for {} experts",
            weights.shape(),
            ev.experts
        )));
    }
    let rp = p * scale;
    let k255 = T::lit(1.0 / 255.0);
    let mut out = Tensor4::zeros([b, 1, rp, rp]);
    let o = out.data_mut();
    for bi in 0..b {
        for y in 0..p {
            for x in 0..p {
                let e = &ev.values[((bi * p + y) * p + x) * n * ev.patch_len..][..n * ev.patch_len];
                for i in 0..scale {
                    for j in 0..scale {
                        let sub = i * scale + j;
                        let mut acc = T::zero();
                        for k in 0..n {
                            acc += weights.at([bi, k, y, x]) * e[k * ev.patch_len + sub];
                        }
                        o[(bi * rp + y * scale + i) * rp + x * scale + j] = acc * k255;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of the loss with respect to the fusion weights, given the
/// gradient `g` at the fused output.
pub fn fused_backward<T: Real>(
    g: &Tensor4<T>,
    ev: &ExpertValues<T>,
    weight_shape: [usize; 4],
    scale: usize,
) -> Tensor4<T> {
    let [_, n, p, _] = weight_shape;
    let rp = p * scale;
    let k255 = T::lit(1.0 / 255.0);
    let gd = g.data();
    Tensor4::from_fn(weight_shape, |[bi, k, y, x]| {
        let e = &ev.values[((bi * p + y) * p + x) * n * ev.patch_len + k * ev.patch_len..][..ev.patch_len];
        let mut acc = T::zero();
        for i in 0..scale {
            for j in 0..scale {
                acc += gd[(bi * rp + y * scale + i) * rp + x * scale + j] * e[i * scale + j];
            }
        }
        acc * k255
    })
}

/// Gradients for LUT entries expressed in [0,1] units: by linearity, entry
/// `v` at simplex vertex `i` contributes `W_k · w_i / s` to its subpixel.
fn lut_grads<T: Real>(
    g: &Tensor4<T>,
    weights: &Tensor4<T>,
    ev: &ExpertValues<T>,
    scale: usize,
    interval: u32,
    lut_lens: &[usize],
) -> Vec<Vec<T>> {
    let [b, n, p, _] = weights.shape();
    let rp = p * scale;
    let s = T::lit(f64::from(interval));
    let mut out: Vec<Vec<T>> = lut_lens.iter().map(|&l| vec![T::zero(); l]).collect();
    for bi in 0..b {
        for y in 0..p {
            for x in 0..p {
                let (offs, sw) = ev.simplex[(bi * p + y) * p + x];
                for i in 0..scale {
                    for j in 0..scale {
                        let gv = g.data()[(bi * rp + y * scale + i) * rp + x * scale + j];
                        for (k, dst) in out.iter_mut().enumerate().take(n) {
                            let gk = gv * weights.at([bi, k, y, x]) / s;
                            for (&o, &w) in offs.iter().zip(&sw) {
                                dst[o + i * scale + j] += gk * T::lit(f64::from(w));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct StepGrads<T> {
    pub loss: T,
    pub predictor: Grads<T>,
    pub temporal: Grads<T>,
    /// Gradient at the predictor output (the per-pixel fusion weights).
    pub weights: Tensor4<T>,
    pub luts: Option<Vec<Vec<T>>>,
}

fn add<T: Real>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "spatial {:?} vs temporal {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Tensor4::new(a.shape(), a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect())
}

/// Loss of the full model on a batch, forward only.
pub fn batch_loss<T: Real>(model: &ConvLut<T>, batch: &Batch<T>, eps: T) -> Result<T> {
    let w = model.predictor.forward(&batch.pred_in)?;
    let spatial = fused_forward(&w, &batch.experts, batch.scale)?;
    let pred = add(&spatial, &model.temporal.forward(&batch.temp_in)?)?;
    Ok(charbonnier_loss(&pred, &batch.target, eps)?.0)
}

/// Loss and gradients of every trainable parameter on a batch. LUT
/// gradients are produced when `lut_lens` (value count per expert) is given.
pub fn loss_and_grads<T: Real>(
    model: &ConvLut<T>,
    batch: &Batch<T>,
    eps: T,
    interval: u32,
    lut_lens: Option<&[usize]>,
) -> Result<StepGrads<T>> {
    let (w, pc) = model.predictor.forward_train(&batch.pred_in)?;
    let spatial = fused_forward(&w, &batch.experts, batch.scale)?;
    let (r, tc) = model.temporal.forward_train(&batch.temp_in)?;
    let pred = add(&spatial, &r)?;
    let (loss, g) = charbonnier_loss(&pred, &batch.target, eps)?;
    let dw = fused_backward(&g, &batch.experts, w.shape(), batch.scale);
    let (predictor, _) = model.predictor.backward(&pc, &dw)?;
    let (temporal, _) = model.temporal.backward(&tc, &g)?;
    let luts = lut_lens.map(|lens| lut_grads(&g, &w, &batch.experts, batch.scale, interval, lens));
    Ok(StepGrads {
        loss,
        predictor,
        temporal,
        weights: dw,
        luts,
    })
}

/// One line of the training log. Step records carry the batch loss; epoch
/// records carry the mean epoch loss and the validation PSNR.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRecord {
    pub kind: String,
    pub epoch: usize,
    pub step: usize,
    pub loss: Option<f64>,
    pub val_psnr: Value,
}

fn mean_psnr(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

/// Mean full-frame luma PSNR of the model on `frames`.
pub fn validation_psnr<T: Real>(
    model: &ConvLut<T>,
    bank: &ExpertBank,
    table: &OrderTable,
    frames: &[TrainFrame<T>],
) -> Result<f64> {
    let v = frames
        .par_iter()
        .map(|f| {
            let prev = f.prev.clone().map(Frame::gray);
            let out = model.upscale(
                bank,
                table,
                &Frame::gray(f.lr.clone()),
                prev.as_ref(),
                f.motion.as_ref(),
                true,
            )?;
            psnr(&out.luma(), &f.hr)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_psnr(&v))
}

/// Mean luma PSNR of expert `k` used alone (fast path, no fusion).
pub fn single_expert_psnr<T: Real>(
    bank: &ExpertBank,
    table: &OrderTable,
    k: usize,
    frames: &[TrainFrame<T>],
) -> Result<f64> {
    let lut = bank
        .luts()
        .get(k)
        .ok_or_else(|| Error::invalid(format!("expert {k} out of range")))?;
    let v = frames
        .par_iter()
        .map(|f| psnr(&upscale_lut(lut, table, &f.lr)?, &f.hr))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_psnr(&v))
}

/// Split `frames` into (training, validation) by [`validation_count`]. With
/// a single frame both sets are that frame.
pub fn split_frames<T>(frames: &[TrainFrame<T>]) -> (&[TrainFrame<T>], &[TrainFrame<T>]) {
    let v = validation_count(frames.len());
    if v == 0 {
        (frames, frames)
    } else {
        frames.split_at(frames.len() - v)
    }
}

/// Train `model` in place; `on_record` sees every log line as it is produced.
pub fn train<T: Real>(
    cfg: &TrainConfig,
    frames: &[TrainFrame<T>],
    bank: &mut ExpertBank,
    table: &OrderTable,
    model: &mut ConvLut<T>,
    mut on_record: impl FnMut(&LogRecord) -> Result<()>,
) -> Result<Vec<LogRecord>> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::invalid("empty dataset: no received frames to train on"));
    }
    model.check_bank(bank)?;
    let (train_set, val_set) = split_frames(frames);
    let (lw, lh) = (frames[0].lr.width(), frames[0].lr.height());
    if frames.iter().any(|f| (f.lr.width(), f.lr.height()) != (lw, lh)) {
        return Err(Error::shape("training frames differ in size"));
    }
    let patch = cfg.patch.min(lw).min(lh);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let adam = |lr: f64| {
        let mut a = Adam::new(T::lit(lr));
        a.beta1 = T::lit(cfg.beta1);
        a.beta2 = T::lit(cfg.beta2);
        a
    };
    let (mut adam_p, mut adam_t, mut adam_l) = (adam(cfg.lr), adam(cfg.lr), adam(cfg.lr));
    let mut shadow: Vec<Vec<T>> = if cfg.finetune_luts {
        bank.luts()
            .iter()
            .map(|l| l.values().iter().map(|&v| T::lit(f64::from(v) / 255.0)).collect())
            .collect()
    } else {
        Vec::new()
    };
    let lut_lens: Vec<usize> = bank.luts().iter().map(|l| l.values().len()).collect();
    let eps = T::lit(cfg.eps);

    let mut log = Vec::new();
    let mut emit = |r: LogRecord, log: &mut Vec<LogRecord>| -> Result<()> {
        on_record(&r)?;
        log.push(r);
        Ok(())
    };
    let val0 = validation_psnr(model, bank, table, val_set)?;
    emit(
        LogRecord {
            kind: "epoch".into(),
            epoch: 0,
            step: 0,
            loss: None,
            val_psnr: psnr_json(val0),
        },
        &mut log,
    )?;

    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len())
            .flat_map(|i| std::iter::repeat_n(i, cfg.crops_per_frame))
            .collect();
        order.shuffle(&mut rng);
        let crops: Vec<Crop> = order
            .into_iter()
            .map(|frame| Crop {
                frame,
                x0: rng.gen_range(0..=lw - patch),
                y0: rng.gen_range(0..=lh - patch),
            })
            .collect();
        let mut losses = Vec::new();
        for chunk in crops.chunks(cfg.batch) {
            let fused = FusedBank::new(bank, table)?;
            let batch = make_batch(train_set, chunk, patch, &fused)?;
            let want = cfg.finetune_luts.then_some(lut_lens.as_slice());
            let g = loss_and_grads(model, &batch, eps, bank.interval(), want)?;
            adam_p.step(model.predictor.params_mut(), &g.predictor)?;
            adam_t.step(model.temporal.params_mut(), &g.temporal)?;
            if let Some(lg) = &g.luts {
                adam_l.step(shadow.iter_mut().map(Vec::as_mut_slice).collect(), lg)?;
                for (lut, sh) in bank.luts_mut().iter_mut().zip(&shadow) {
                    for (v, &s) in lut.values_mut().iter_mut().zip(sh) {
                        *v = (s.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8;
                    }
                }
            }
            step += 1;
            let loss = g.loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::invalid(format!("loss diverged at step {step}")));
            }
            losses.push(loss);
            emit(
                LogRecord {
                    kind: "step".into(),
                    epoch,
                    step,
                    loss: Some(loss),
                    val_psnr: Value::Null,
                },
                &mut log,
            )?;
        }
        let val = validation_psnr(model, bank, table, val_set)?;
        emit(
            LogRecord {
                kind: "epoch".into(),
                epoch,
                step,
                loss: Some(losses.iter().sum::<f64>() / losses.len().max(1) as f64),
                val_psnr: psnr_json(val),
            },
            &mut log,
        )?;
    }
    Ok(log)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameEval {
    pub index: usize,
    pub psnr: Value,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub profile: String,
    pub temporal: bool,
    pub frames_total: usize,
    pub frames_evaluated: usize,
    /// PSNR over RGB; SSIM on luma.
    pub mean_psnr: Value,
    pub mean_ssim: f64,
    pub ssim_channel: String,
    pub per_frame: Vec<FrameEval>,
}

/// Run the full pipeline over every received frame of a dataset.
pub fn evaluate<T: Real>(
    model: &ConvLut<T>,
    bank: &ExpertBank,
    table: &OrderTable,
    ds: &Dataset,
    use_temporal: bool,
) -> Result<EvalReport> {
    model.check_bank(bank)?;
    let received: Vec<_> = ds.received().collect();
    let scored = received
        .par_iter()
        .map(|s| {
            let lr = s.lr.as_ref().expect("received");
            let prev = s.prev.and_then(|p| ds.sample(p)).and_then(|p| p.lr.as_ref());
            let sr = model.upscale(bank, table, lr, prev, Some(&s.motion), use_temporal)?;
            Ok((s.index, psnr_frame(&sr, &s.hr)?, ssim_frame(&sr, &s.hr)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let psnrs: Vec<f64> = scored.iter().map(|s| s.1).collect();
    let n = scored.len().max(1) as f64;
    Ok(EvalReport {
        profile: ds.meta.rate.clone(),
        temporal: use_temporal,
        frames_total: ds.samples.len(),
        frames_evaluated: scored.len(),
        mean_psnr: if scored.is_empty() {
            Value::Null
        } else {
            psnr_json(mean_psnr(&psnrs))
        },
        mean_ssim: scored.iter().map(|s| s.2).sum::<f64>() / n,
        ssim_channel: "luma".into(),
        per_frame: scored
            .into_iter()
            .map(|(index, p, s)| FrameEval {
                index,
                psnr: psnr_json(p),
                ssim: s,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests;
