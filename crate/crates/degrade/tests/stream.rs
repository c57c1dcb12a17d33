use lutsr_core::Plane;
use lutsr_degrade::{block_match_motion, load_dataset, simulate, synth_clip, write_dataset, Profile, SimConfig};

#[test]
fn dataset_round_trips_through_disk() {
    let hr = synth_clip(4, 64, 48, 3).unwrap();
    let cfg = SimConfig::profile(Profile::K500, 3);
    let samples = simulate(&hr, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&samples, &cfg, dir.path()).unwrap();
    assert_eq!(manifest.len(), 4);

    let ds = load_dataset(dir.path()).unwrap();
    assert_eq!((ds.meta.lr_width, ds.meta.lr_height), (16, 12));
    for (s, d) in samples.iter().zip(&ds.samples) {
        assert_eq!(s.hr, d.hr);
        assert_eq!(s.lr, d.lr);
        assert_eq!(s.motion, d.motion);
        assert_eq!(s.prev, d.prev);
    }
}

#[test]
fn stronger_quantization_costs_fidelity() {
    let hr = synth_clip(3, 64, 64, 11).unwrap();
    let psnr = |qp: u8| -> f64 {
        let s = simulate(&hr, &SimConfig::fixed(vec![qp], 11)).unwrap();
        s.iter().map(|s| s.psnr.unwrap()).sum::<f64>() / s.len() as f64
    };
    let (lo, hi) = (psnr(5), psnr(45));
    assert!(lo > hi + 3.0, "QP5 {lo:.2} dB vs QP45 {hi:.2} dB");
}

#[test]
fn block_matching_recovers_a_global_shift() {
    let tex = |x: usize, y: usize| ((x * 37 + y * 91 + (x * y) % 17 * 13) % 251) as u8;
    let prev = Plane::from_fn(48, 48, tex);
    let cur = Plane::from_fn(48, 48, |x, y| tex(x.saturating_sub(3), y.saturating_sub(2)));
    let field = block_match_motion(&prev, &cur, 16, 8).unwrap();
    assert_eq!(field.at(24, 24), [3, 2]);
}
