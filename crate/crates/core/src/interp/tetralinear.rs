use super::probe::{NoProbe, OpProbe};
use super::{round_div_u8, split_with_shift};
use crate::lut::LutTable;

/// 16-vertex multilinear interpolation with weights `prod(L or s - L)`.
pub fn tetralinear_interp_into<P: OpProbe>(lut: &LutTable, px: [u8; 4], out: &mut [u8], probe: &mut P) {
    let split = split_with_shift(px, lut.shift());
    let s = u64::from(lut.interval());
    let mut weights = [0u64; 16];
    let mut offsets = [0usize; 16];
    for mask in 0..16u8 {
        weights[mask as usize] = (0..4)
            .map(|axis| {
                let l = u64::from(split.lsb[axis]);
                if mask & (0b1000 >> axis) != 0 {
                    l
                } else {
                    s - l
                }
            })
            .product();
        offsets[mask as usize] = lut.vertex_offset(split.corner(mask));
    }
    let denom = s.pow(4);
    let v = lut.values();
    for (sub, dst) in out[..lut.patch_len()].iter_mut().enumerate() {
        let mut acc = 0u64;
        for (w, o) in weights.iter().zip(&offsets) {
            probe.fetch();
            probe.mul();
            acc += w * u64::from(v[o + sub]);
        }
        *dst = round_div_u8(acc, denom);
    }
}

pub fn tetralinear_interp(lut: &LutTable, px: [u8; 4]) -> Vec<u8> {
    let mut out = vec![0; lut.patch_len()];
    tetralinear_interp_into(lut, px, &mut out, &mut NoProbe);
    out
}
