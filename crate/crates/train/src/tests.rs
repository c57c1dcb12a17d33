use super::*;
use lutsr_core::lut::LutTable;
use lutsr_core::model::ModelShape;
use lutsr_core::nnet::Net;

fn random_bank(n: usize, interval: u32, scale: usize, rng: &mut ChaCha8Rng) -> ExpertBank {
    let bins = lutsr_core::lut::bins_for_interval(interval).unwrap();
    let luts = (0..n)
        .map(|_| {
            LutTable::new(
                interval,
                scale,
                (0..bins.pow(4) * scale * scale).map(|_| rng.gen()).collect(),
            )
            .unwrap()
        })
        .collect();
    ExpertBank::new(luts, (0..n as u32).collect()).unwrap()
}

fn random_plane(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Plane<u8> {
    Plane::from_fn(w, h, |_, _| rng.gen())
}

fn random_frames<T: Real>(count: usize, w: usize, h: usize, scale: usize, rng: &mut ChaCha8Rng) -> Vec<TrainFrame<T>> {
    let mut prev: Option<Plane<u8>> = None;
    (0..count)
        .map(|i| {
            let lr = random_plane(w, h, rng);
            let hr = random_plane(w * scale, h * scale, rng);
            let blocks = w.div_ceil(16) * h.div_ceil(16);
            let mv = (0..blocks)
                .map(|_| [rng.gen_range(-8..=8), rng.gen_range(-8..=8)])
                .collect();
            let motion = prev.as_ref().map(|_| MotionField::new(w, h, 16, 8, mv).unwrap());
            let f = TrainFrame::new(i, lr.clone(), hr, prev.take(), motion, scale).unwrap();
            prev = Some(lr);
            f
        })
        .collect()
}

/// A model whose temporal output is not identically zero, so every
/// parameter has a gradient.
fn live_model(experts: usize, scale: usize, width: usize, seed: u64) -> ConvLut<f64> {
    let mut m = ConvLut::<f64>::init(
        ModelShape {
            width,
            ..ModelShape::new(experts, scale)
        },
        seed,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    m.temporal = Net::temporal(4, width, 1, lutsr_core::model::DEPTH, scale, &mut rng).unwrap();
    m
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn signs(m: &ConvLut<f64>, b: &Batch<f64>) -> (Vec<bool>, Vec<bool>) {
    (
        m.predictor.relu_signs(&b.pred_in).unwrap(),
        m.temporal.relu_signs(&b.temp_in).unwrap(),
    )
}

#[test]
fn end_to_end_parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let bank = random_bank(2, 64, 2, &mut rng);
    let table = OrderTable::build(64).unwrap();
    let frames = random_frames::<f64>(2, 7, 6, 2, &mut rng);
    let fused = FusedBank::new(&bank, &table).unwrap();
    let crops = [Crop { frame: 0, x0: 1, y0: 0 }, Crop { frame: 1, x0: 0, y0: 1 }];
    let batch = make_batch(&frames, &crops, 5, &fused).unwrap();
    let mut model = live_model(2, 2, 4, 3);
    let eps = 1e-3;
    let g = loss_and_grads(&model, &batch, eps, 64, None).unwrap();
    assert!((g.loss - batch_loss(&model, &batch, eps).unwrap()).abs() < 1e-12);

    // Charbonnier curvature is ~1/eps near zero residual, so the step must be
    // well below eps for the central difference to be a derivative estimate.
    let base = signs(&model, &batch);
    let h = 1e-5;
    let (mut checked, mut attempts, mut seen) = (0, 0, std::collections::HashSet::new());
    while checked < 50 {
        attempts += 1;
        assert!(attempts < 2000, "too many kink straddles");
        let net = rng.gen_range(0..2);
        let count = if net == 0 { g.predictor.len() } else { g.temporal.len() };
        let t = rng.gen_range(0..count);
        let len = if net == 0 {
            g.predictor[t].len()
        } else {
            g.temporal[t].len()
        };
        let i = rng.gen_range(0..len);
        if !seen.insert((net, t, i)) {
            continue;
        }
        let mut eval = |delta: f64| {
            let params = if net == 0 {
                model.predictor.params_mut()
            } else {
                model.temporal.params_mut()
            };
            let mut params = params;
            params[t][i] += delta;
            (batch_loss(&model, &batch, eps).unwrap(), signs(&model, &batch))
        };
        let (lp, sp) = eval(h);
        let (lm, sm) = eval(-2.0 * h);
        eval(h);
        if sp != base || sm != base {
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        let analytic = if net == 0 { g.predictor[t][i] } else { g.temporal[t][i] };
        assert!(
            rel_err(analytic, numeric) < 1e-3,
            "net {net} tensor {t} index {i}: {analytic} vs {numeric}"
        );
        checked += 1;
    }
}

#[test]
fn weight_map_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bank = random_bank(3, 32, 2, &mut rng);
    let table = OrderTable::build(32).unwrap();
    let frames = random_frames::<f64>(1, 6, 6, 2, &mut rng);
    let fused = FusedBank::new(&bank, &table).unwrap();
    let batch = make_batch(&frames, &[Crop { frame: 0, x0: 0, y0: 0 }], 6, &fused).unwrap();
    let model = live_model(3, 2, 4, 5);
    let w = model.predictor.forward(&batch.pred_in).unwrap();
    let r = model.temporal.forward(&batch.temp_in).unwrap();
    let loss_at = |w: &Tensor4<f64>| {
        let pred = add(&fused_forward(w, &batch.experts, 2).unwrap(), &r).unwrap();
        charbonnier_loss(&pred, &batch.target, 1e-3).unwrap().0
    };
    let g = loss_and_grads(&model, &batch, 1e-3, 32, None).unwrap();
    let h = 1e-5;
    for _ in 0..50 {
        let i = rng.gen_range(0..w.data().len());
        let mut wp = w.clone();
        wp.data_mut()[i] += h;
        let mut wm = w.clone();
        wm.data_mut()[i] -= h;
        let numeric = (loss_at(&wp) - loss_at(&wm)) / (2.0 * h);
        assert!(rel_err(g.weights.data()[i], numeric) < 1e-3, "{i}");
    }
}

#[test]
fn fused_forward_matches_unrounded_fused_query() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bank = random_bank(2, 16, 3, &mut rng);
    let table = OrderTable::build(16).unwrap();
    let frames = random_frames::<f64>(1, 5, 4, 3, &mut rng);
    let fused = FusedBank::new(&bank, &table).unwrap();
    let batch = make_batch(&frames, &[Crop { frame: 0, x0: 1, y0: 0 }], 4, &fused).unwrap();
    let w = Tensor4::from_fn([1, 2, 4, 4], |[_, k, y, x]| {
        if k == 0 {
            (x + y) as f64 / 8.0
        } else {
            1.0 - (x + y) as f64 / 8.0
        }
    });
    let out = fused_forward(&w, &batch.experts, 3).unwrap();
    let mut buf = vec![0u8; 9];
    for y in 0..4 {
        for x in 0..4 {
            let px = lutsr_core::fusion::query_patch(&frames[0].lr, x + 1, y);
            let wk = [w.at([0, 0, y, x]), w.at([0, 1, y, x])];
            fused.query_into(px, &wk, &mut buf, &mut lutsr_core::interp::NoProbe);
            for sub in 0..9 {
                let v = out.at([0, 0, y * 3 + sub / 3, x * 3 + sub % 3]) * 255.0;
                assert!((v - f64::from(buf[sub])).abs() <= 0.5 + 1e-9, "{v} vs {}", buf[sub]);
            }
        }
    }
}

fn small_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        patch: 6,
        batch: 4,
        lr: 1e-3,
        epochs,
        crops_per_frame: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bank = random_bank(2, 32, 2, &mut rng);
    let table = OrderTable::build(32).unwrap();
    let frames = random_frames::<f32>(4, 8, 8, 2, &mut rng);
    let init = ConvLut::<f32>::init(
        ModelShape {
            width: 4,
            ..ModelShape::new(2, 2)
        },
        9,
    )
    .unwrap();
    let mut model = init.clone();
    let log = train(&small_cfg(0), &frames, &mut bank, &table, &mut model, |_| Ok(())).unwrap();
    assert_eq!(model, init);
    assert_eq!(log.len(), 1);
}

#[test]
fn frozen_luts_stay_byte_identical_and_finetuning_moves_them() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bank0 = random_bank(2, 32, 2, &mut rng);
    let table = OrderTable::build(32).unwrap();
    let frames = random_frames::<f32>(4, 8, 8, 2, &mut rng);
    let init = ConvLut::<f32>::init(
        ModelShape {
            width: 4,
            ..ModelShape::new(2, 2)
        },
        9,
    )
    .unwrap();

    let mut bank = bank0.clone();
    let mut model = init.clone();
    train(&small_cfg(2), &frames, &mut bank, &table, &mut model, |_| Ok(())).unwrap();
    assert_eq!(
        lutsr_core::lut::encode_bank(&bank),
        lutsr_core::lut::encode_bank(&bank0)
    );
    assert_ne!(model, init);

    let mut bank = bank0.clone();
    let mut model = init.clone();
    let cfg = TrainConfig {
        finetune_luts: true,
        lr: 5e-3,
        ..small_cfg(2)
    };
    train(&cfg, &frames, &mut bank, &table, &mut model, |_| Ok(())).unwrap();
    assert_ne!(bank, bank0);
}

#[test]
fn training_is_deterministic_and_logs_every_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bank0 = random_bank(2, 32, 2, &mut rng);
    let table = OrderTable::build(32).unwrap();
    let frames = random_frames::<f32>(5, 8, 8, 2, &mut rng);
    let init = ConvLut::<f32>::init(
        ModelShape {
            width: 4,
            ..ModelShape::new(2, 2)
        },
        1,
    )
    .unwrap();
    let run = || {
        let (mut bank, mut model) = (bank0.clone(), init.clone());
        let log = train(&small_cfg(3), &frames, &mut bank, &table, &mut model, |_| Ok(())).unwrap();
        (model, log)
    };
    let (m1, l1) = run();
    let (m2, l2) = run();
    assert_eq!(m1, m2);
    assert_eq!(l1, l2);
    // 3 training frames x 2 crops in batches of 4: two steps per epoch.
    assert_eq!(l1.iter().filter(|r| r.kind == "step").count(), 6);
    assert_eq!(l1.iter().filter(|r| r.kind == "epoch").count(), 4);
}

#[test]
fn errors_and_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bank = random_bank(2, 32, 2, &mut rng);
    let table = OrderTable::build(32).unwrap();
    let mut model = ConvLut::<f32>::init(
        ModelShape {
            width: 4,
            ..ModelShape::new(3, 2)
        },
        1,
    )
    .unwrap();
    let frames = random_frames::<f32>(2, 8, 8, 2, &mut rng);
    assert!(train(&small_cfg(1), &[], &mut bank, &table, &mut model, |_| Ok(())).is_err());
    assert!(train(&small_cfg(1), &frames, &mut bank, &table, &mut model, |_| Ok(())).is_err());
    assert!(TrainConfig {
        patch: 1,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    assert_eq!([0, 1, 2, 4, 5, 8].map(validation_count), [0, 0, 1, 1, 2, 2]);
}
