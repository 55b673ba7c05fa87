//! Zhang-Suen skeletonization.
//!
//! The classic two-subpass thinning: each iteration first deletes
//! south-east boundary pixels, then north-west boundary pixels, both under
//! the usual neighborhood-count and connectivity-transition conditions, and
//! repeats until a full iteration deletes nothing. The result is a 1-pixel
//! skeleton; running the pass again on its own output changes nothing.

use super::BinaryMask;

/// The eight neighbors of `(r, c)` in the order N, NE, E, SE, S, SW, W, NW.
#[inline]
fn neighbors(mask: &BinaryMask, r: usize, c: usize) -> [bool; 8] {
    let (r, c) = (r as isize, c as isize);
    [
        mask.get_signed(r - 1, c),
        mask.get_signed(r - 1, c + 1),
        mask.get_signed(r, c + 1),
        mask.get_signed(r + 1, c + 1),
        mask.get_signed(r + 1, c),
        mask.get_signed(r + 1, c - 1),
        mask.get_signed(r, c - 1),
        mask.get_signed(r - 1, c - 1),
    ]
}

/// Thin `mask` to its Zhang-Suen skeleton.
pub fn zhang_suen_thin(mask: &BinaryMask) -> BinaryMask {
    let mut current = mask.clone();
    let mut marks: Vec<(usize, usize)> = Vec::new();
    loop {
        let mut deleted_this_round = false;
        for subpass in 0..2 {
            marks.clear();
            for r in 0..current.rows() {
                for c in 0..current.cols() {
                    if !current.get(r, c) {
                        continue;
                    }
                    let n = neighbors(&current, r, c);
                    let b: u32 = n.iter().map(|&x| x as u32).sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    // Number of 0 -> 1 transitions around the circle.
                    let a = (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    // n[0]=N, n[2]=E, n[4]=S, n[6]=W.
                    let ok = if subpass == 0 {
                        (!n[0] || !n[2] || !n[4]) && (!n[2] || !n[4] || !n[6])
                    } else {
                        (!n[0] || !n[2] || !n[6]) && (!n[0] || !n[4] || !n[6])
                    };
                    if ok {
                        marks.push((r, c));
                    }
                }
            }
            for &(r, c) in &marks {
                current.set(r, c, false);
            }
            deleted_this_round |= !marks.is_empty();
        }
        if !deleted_this_round {
            return current;
        }
    }
}
