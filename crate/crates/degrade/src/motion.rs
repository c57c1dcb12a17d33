use rayon::prelude::*;

use lutsr_core::plane::Plane;
use lutsr_core::temporal::MotionField;
use lutsr_core::{Error, Result};

/// Exhaustive SAD block matching. Each block of `cur` is compared against
/// `prev` displaced by `-(dx, dy)` with replicate borders; ties go to the
/// smallest `|dx| + |dy|`, then to the first candidate in row-major order.
pub fn block_match_motion(prev: &Plane<u8>, cur: &Plane<u8>, block: usize, radius: u32) -> Result<MotionField> {
    if !prev.same_size(cur) {
        return Err(Error::shape(format!(
            "previous frame {}x{}, current {}x{}",
            prev.width(),
            prev.height(),
            cur.width(),
            cur.height()
        )));
    }
    if block == 0 {
        return Err(Error::invalid("block size must be positive"));
    }
    let (w, h) = (cur.width(), cur.height());
    let (bx, by) = (w.div_ceil(block), h.div_ceil(block));
    let r = radius as i32;
    let vectors = (0..bx * by)
        .into_par_iter()
        .map(|b| {
            let (x0, y0) = ((b % bx) * block, (b / bx) * block);
            let (x1, y1) = ((x0 + block).min(w), (y0 + block).min(h));
            let mut best = (u64::MAX, u32::MAX, [0i32; 2]);
            for dy in -r..=r {
                for dx in -r..=r {
                    let mut sad = 0u64;
                    for y in y0..y1 {
                        let row = cur.row(y);
                        for x in x0..x1 {
                            let p = prev.get_clamped(x as isize - dx as isize, y as isize - dy as isize);
                            sad += u64::from(row[x].abs_diff(p));
                        }
                    }
                    let norm = dx.unsigned_abs() + dy.unsigned_abs();
                    if (sad, norm) < (best.0, best.1) {
                        best = (sad, norm, [dx, dy]);
                    }
                }
            }
            best.2
        })
        .collect();
    MotionField::new(w, h, block, radius, vectors)
}
