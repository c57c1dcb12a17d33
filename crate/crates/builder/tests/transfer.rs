use lutsr_builder::{build_bank, build_lut, builtin_oracle, FnOracle};
use lutsr_core::interp::{tetra_interp_reference, FastLut, NoProbe};
use lutsr_core::lut::{encode_bank, lut_size_bytes};
use lutsr_core::OrderTable;

#[test]
fn bank_payload_matches_the_size_formula() {
    let bank = build_bank(&[0, 25, 50], "qp_adaptive", 32, 2).unwrap();
    assert_eq!(bank.labels(), [0, 25, 50]);
    assert_eq!(bank.payload_len() as u64, lut_size_bytes(32, 2, 3).unwrap());
    assert_eq!(encode_bank(&bank).len(), 24 + 4 * 3 + bank.payload_len());
}

#[test]
fn constant_oracle_is_reproduced_everywhere() {
    let oracle = FnOracle {
        name: "grey".into(),
        scale: 2,
        label: 0,
        f: |_: [u8; 4], out: &mut [u8]| {
            out.fill(117);
            Ok(())
        },
    };
    let lut = build_lut(&oracle, 16).unwrap();
    let table = OrderTable::build(16).unwrap();
    let fast = FastLut::new(&lut, &table).unwrap();
    let mut out = [0u8; 4];
    for i in 0..5000u32 {
        let px = i.wrapping_mul(0x9E37_79B9).to_le_bytes();
        fast.query_into(px, &mut out, &mut NoProbe);
        assert_eq!(out, [117; 4], "{px:?}");
    }
}

#[test]
fn nearest_oracle_is_exact_on_the_lattice() {
    let oracle = builtin_oracle("nearest", 0, 2).unwrap();
    let lut = build_lut(&oracle, 32).unwrap();
    for px in [[0, 32, 64, 96], [224, 0, 160, 32], [128, 128, 128, 128]] {
        assert_eq!(tetra_interp_reference(&lut, px), vec![px[0]; 4]);
    }
}

#[test]
fn unknown_oracle_is_rejected() {
    assert!(builtin_oracle("lanczos", 0, 4).is_err());
    assert!(build_bank(&[10, 10], "nearest", 16, 4).is_err());
}
